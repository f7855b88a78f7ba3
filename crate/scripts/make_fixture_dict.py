#!/usr/bin/env python3
"""Build data/dict/fixture.dict from a jieba-format dictionary.

Keeps every entry that is a substring of a study token, so the fixture
segments the sample exactly as the full dictionary would be asked to, and
adds the extra words listed in EXTRA. Usage:

    python3 scripts/make_fixture_dict.py path/to/jieba/dict.txt
"""

import json
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
SAMPLE = ROOT / "data/fixtures/study/sample.json"
OUT = ROOT / "data/dict/fixture.dict"

# Words the reference dictionary only finds through its HMM stage.
EXTRA = {"微信": (3000, "n")}

# Long example tokens, kept segmentable even when they are not in the sample.
ALSO = ["微信公众号天天中彩票", "日本毛片免费视频观看", "北京赛车", "国产精品"]


def main() -> None:
    src = Path(sys.argv[1])
    tokens = [e["text"] for e in json.loads(SAMPLE.read_text(encoding="utf-8"))]
    texts = [t[1:] if t.startswith(" ") else t for t in tokens] + ALSO
    wanted = {t[i:j] for t in texts for i in range(len(t)) for j in range(i + 1, len(t) + 1)}

    entries = {}
    for line in src.read_text(encoding="utf-8").splitlines():
        parts = line.split()
        if len(parts) >= 2 and parts[0] in wanted:
            entries[parts[0]] = (int(parts[1]), parts[2] if len(parts) > 2 else "")
    for word, value in EXTRA.items():
        entries.setdefault(word, value)

    lines = [f"{w} {f} {t}".rstrip() for w, (f, t) in sorted(entries.items())]
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"{len(lines)} entries -> {OUT.relative_to(ROOT)}")


if __name__ == "__main__":
    main()
