#!/usr/bin/env python3
"""Generate synthetic record fixtures whose aggregates equal the published
study tables.

Only per-table counts are constrained; which token gets which score, flag or
ranking is drawn with a fixed seed. Nothing here imports the Rust metrics
code: containment, segmentation and the count checks are reimplemented so
the fixtures are an independent oracle.

    python3 scripts/make_study_fixtures.py
"""

import hashlib
import itertools
import json
import math
import random
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
DIR = ROOT / "data/fixtures/study"
DICT = ROOT / "data/dict/fixture.dict"
TEMPLATES = ROOT / "crates/core/templates/v1"
SEED = 20240601
EPOCH = "1970-01-01T00:00:00Z"

MODELS = ["GPT-4", "GPT-4o"]
SERIES = {("GPT-4o", "long"): "G4o-L", ("GPT-4o", "split"): "G4o-S",
          ("GPT-4", "long"): "G4-L", ("GPT-4", "split"): "G4-S"}

# Sentences containing the token, per (model, variant).
RETAINED = {("GPT-4", "long"): 134, ("GPT-4", "split"): 151,
            ("GPT-4o", "long"): 75, ("GPT-4o", "split"): 139}

# Placements at 1st..4th.
RANKING = {"G4o-L": [100, 32, 17, 17], "G4o-S": [20, 62, 33, 51],
           "G4-L": [13, 40, 57, 56], "G4-S": [33, 32, 59, 42]}

# Number of records at score 0..5.
SCORES = {("GPT-4", "long"): [4, 3, 5, 11, 17, 126],
          ("GPT-4", "split"): [1, 1, 7, 10, 22, 125],
          ("GPT-4o", "long"): [58, 10, 16, 8, 5, 69],
          ("GPT-4o", "split"): [1, 1, 3, 14, 24, 123]}

# (accurate, consistent) counts.
FLAGS = {"explain": (85, 114), "translate": (78, 117)}

# GPT-4o long-token score-5 sentences stop growing past this length.
PLATEAU = 6

UNRELATED = [
    "我们今天学习了如何使用新的词汇扩展我们的表达能力。",
    "这个问题需要更多时间来讨论。",
    "请在会议开始前准备好材料。",
    "他每天早上都会去公园散步。",
]


def rid(*parts):
    h = hashlib.sha256()
    for p in parts:
        b = str(p).encode()
        h.update(len(b).to_bytes(8, "little"))
        h.update(b)
    return h.hexdigest()[:32]


def load_dict():
    freq = {}
    for line in DICT.read_text(encoding="utf-8").splitlines():
        parts = line.split()
        if len(parts) >= 2:
            freq[parts[0]] = freq.get(parts[0], 0) + int(parts[1])
    return freq


def segment(text, freq):
    """Max-probability split, OOV frequency 1, longer segment on ties."""
    total = max(sum(freq.values()), 1)
    logt = math.log(total)
    n = len(text)
    best = [(0.0, n)] * (n + 1)
    for i in range(n - 1, -1, -1):
        cand = None
        for j in range(i + 1, n + 1):
            w = text[i:j]
            if j - i > 1 and w not in freq:
                continue
            score = math.log(freq.get(w, 1)) - logt + best[j][0]
            if cand is None or score >= cand[0]:
                cand = (score, j)
        best[i] = cand
    out, i = [], 0
    while i < n:
        j = best[i][1]
        out.append(text[i:j])
        i = j
    return out


def contains(token, segments, sentence):
    sentence = sentence.strip()
    if segments is not None:
        return all(s in sentence for s in segments)
    return token in sentence


def retained_sentence(token, segments, rng):
    if segments is None:
        return rng.choice([f"我在新闻里看到了{token}的相关内容。", f"有人在群里提到了{token}。"])
    return "我注意到" + "，还有".join(segments) + "这些词。"


def dropped_sentence(token, segments, rng):
    for s in rng.sample(UNRELATED, len(UNRELATED)):
        if not contains(token, segments, s):
            return s
    raise RuntimeError(f"no unrelated sentence avoids {token!r}")


def choose_retained(items, count, key, rng):
    if key == ("GPT-4o", "long"):
        short = [it for it in items if it["length"] <= PLATEAU]
        return set(it["rank"] for it in rng.sample(short, count))
    return set(it["rank"] for it in rng.sample(items, count))


def assign_scores(items, retained, counts, key, rng):
    """Score 5 only for retained sentences, score 0 only for dropped ones."""
    ranks = [it["rank"] for it in items]
    length = {it["rank"]: it["length"] for it in items}
    kept = [r for r in ranks if r in retained]
    lost = [r for r in ranks if r not in retained]
    pool5 = kept
    if key == ("GPT-4o", "long"):
        pool5 = [r for r in kept if length[r] <= PLATEAU]
    fives = set(rng.sample(pool5, counts[5]))
    zeros = set(rng.sample(lost, counts[0]))
    rest = [r for r in ranks if r not in fives and r not in zeros]
    rng.shuffle(rest)
    middle = [s for s in range(1, 5) for _ in range(counts[s])]
    assert len(middle) == len(rest)
    out = {r: 5 for r in fives}
    out.update({r: 0 for r in zeros})
    out.update(dict(zip(rest, middle)))
    return out


def birkhoff(matrix):
    """Split an integer matrix with equal row and column sums into unit
    permutations (tuples mapping row to column)."""
    m = [row[:] for row in matrix]
    n = len(m)
    perms = []
    while any(any(row) for row in m):
        perm = max(
            (p for p in itertools.permutations(range(n)) if all(m[i][p[i]] > 0 for i in range(n))),
            key=lambda p: min(m[i][p[i]] for i in range(n)),
        )
        for i in range(n):
            m[i][perm[i]] -= 1
        perms.append(perm)
    return perms


def write_jsonl(path, rows):
    with path.open("w", encoding="utf-8") as f:
        for r in rows:
            f.write(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n")


def main():
    rng = random.Random(SEED)
    items = json.loads((DIR / "sample.json").read_text(encoding="utf-8"))
    assert len(items) == 166
    freq = load_dict()
    tpl_long = (TEMPLATES / "sentence_long.txt").read_text(encoding="utf-8").strip()
    tpl_split = (TEMPLATES / "sentence_split.txt").read_text(encoding="utf-8").strip()

    generations, scores = [], []
    for model in MODELS:
        for variant in ["long", "split"]:
            key = (model, variant)
            retained = choose_retained(items, RETAINED[key], key, rng)
            score_of = assign_scores(items, retained, SCORES[key], key, rng)
            for it in items:
                token = it["text"][1:] if it["text"].startswith(" ") else it["text"]
                segs = segment(token, freq) if variant == "split" else None
                if it["rank"] in retained:
                    sentence = retained_sentence(token, segs, rng)
                else:
                    sentence = dropped_sentence(token, segs, rng)
                assert contains(token, segs, sentence) == (it["rank"] in retained)
                prompt = (tpl_long.replace("{token}", token) if segs is None
                          else tpl_split.replace("{segments}", "; ".join(segs)))
                task = "sentence_long" if segs is None else "sentence_split"
                generations.append({
                    "schema_version": 1,
                    "record_id": rid("fixture", task, model, it["rank"]),
                    "token_rank": it["rank"],
                    "token": token,
                    "segments": segs or [],
                    "variant": task,
                    "model": model,
                    "repetition": 0,
                    "template_version": "v1",
                    "prompt": prompt,
                    "response": sentence,
                    "timestamp": EPOCH,
                    "error": None,
                })
                scores.append({"token_rank": it["rank"], "model": model,
                               "variant": variant, "score": score_of[it["rank"]]})

    series = list(RANKING)
    perms = birkhoff([RANKING[s] for s in series])
    assert len(perms) == 166
    rng.shuffle(perms)
    ranks = [{"token_rank": it["rank"],
              "placements": {series[i]: p[i] + 1 for i in range(4)}}
             for it, p in zip(items, perms)]

    judge = []
    for task, (acc, cons) in FLAGS.items():
        order = [it["rank"] for it in items]
        rng.shuffle(order)
        consistent = set(order[:cons])
        accurate = set(order[:acc])
        for it in items:
            token = it["text"][1:] if it["text"].startswith(" ") else it["text"]
            a, c = it["rank"] in accurate, it["rank"] in consistent
            judge.append({
                "schema_version": 1,
                "record_id": rid("fixture-judge", task, it["rank"]),
                "token_rank": it["rank"],
                "token": token,
                "mode": "consistency",
                "task": task,
                "judge_model": "GPT-4",
                "template_version": "v1",
                "members": [],
                "prompt": "",
                "response": f"accurate={int(a)}, consistent={int(c)}",
                "ranking": None,
                "accurate": a,
                "consistent": c,
                "error": None,
                "timestamp": EPOCH,
            })

    # Recount everything from the written rows.
    for key, n in RETAINED.items():
        rows = [g for g in generations if g["model"] == key[0] and g["variant"] == f"sentence_{key[1]}"]
        got = sum(contains(g["token"], g["segments"] if key[1] == "split" else None, g["response"]) for g in rows)
        assert got == n, (key, got)
    for key, counts in SCORES.items():
        got = [sum(1 for s in scores if (s["model"], s["variant"]) == key and s["score"] == k) for k in range(6)]
        assert got == counts, (key, got)
    length = {it["rank"]: it["length"] for it in items}
    assert not any(s["score"] == 5 and length[s["token_rank"]] > PLATEAU
                   for s in scores if (s["model"], s["variant"]) == ("GPT-4o", "long"))
    for s, counts in RANKING.items():
        got = [sum(1 for r in ranks if r["placements"][s] == p) for p in range(1, 5)]
        assert got == counts, (s, got)
    for task, (acc, cons) in FLAGS.items():
        rows = [j for j in judge if j["task"] == task]
        assert (sum(j["accurate"] for j in rows), sum(j["consistent"] for j in rows)) == (acc, cons)

    write_jsonl(DIR / "generations.jsonl", generations)
    write_jsonl(DIR / "scores.jsonl", scores)
    write_jsonl(DIR / "ranks.jsonl", ranks)
    write_jsonl(DIR / "judge.jsonl", judge)
    print(f"{len(generations)} generations, {len(scores)} scores, {len(ranks)} rankings, {len(judge)} judge records")


if __name__ == "__main__":
    main()
