#!/usr/bin/env python3
"""Smoke test for the `tokaudit` extension module.

    maturin build --release -m crates/py/Cargo.toml
    pip install target/wheels/tokaudit-*.whl
    python3 python/smoke_test.py
"""

from pathlib import Path

import tokaudit

DATA = Path(__file__).resolve().parent.parent / "data"
TEXT = "微信公众号天天中彩票"


def main():
    o200k = tokaudit.Vocabulary.load(str(DATA / "profiles/o200k_base.json"))
    cl100k = tokaudit.Vocabulary.load(str(DATA / "profiles/cl100k_base.json"))
    assert len(o200k) == 199_998, len(o200k)
    assert o200k.token(181081) == " " + TEXT

    for mode in ("shortcut", "strict"):
        assert len(o200k.encode(TEXT, mode)) == 2
        assert len(cl100k.encode(TEXT, mode)) == 12
        ranks = cl100k.encode(TEXT, mode)
        assert cl100k.decode(ranks).decode("utf-8") == TEXT

    hist = o200k.length_histogram("han-any", 2)
    plan = tokaudit.sample_plan(hist, 20)
    assert sum(plan.values()) == 166, plan
    assert (plan[10], plan[11]) == (4, 2)

    d = tokaudit.Dictionary.load(str(DATA / "dict/fixture.dict"))
    segments = d.segment(TEXT)
    assert segments == ["微信", "公众", "号", "天天", "中", "彩票"], segments
    assert tokaudit.contains_token(TEXT, "我注意到微信公众号天天中彩票。", None)
    assert not tokaudit.contains_token(TEXT, "我注意到微信和公众号天天中彩票。", None)
    assert tokaudit.contains_token(TEXT, "微信和公众号，天天中彩票。", segments)
    assert not tokaudit.contains_token(TEXT, "我注意到微信。", segments)

    try:
        o200k.encode(TEXT, "fast")
    except ValueError:
        pass
    else:
        raise AssertionError("bad mode accepted")
    try:
        o200k.token(10**9)
    except KeyError:
        pass
    else:
        raise AssertionError("missing rank accepted")

    print("smoke test ok")


if __name__ == "__main__":
    main()
