#!/usr/bin/env python3
"""Independent reference for the answer metrics.

Edit distance and LCS are computed with memoized recursion (not the
iterative tables used in the library) and scores with exact fractions.
Writes tests/data/metric_golden.json.
"""
import json
import sys
from fractions import Fraction
from functools import lru_cache
from pathlib import Path

ASCII_SPACE = " \t\n\r\f\v"
ASCII_PUNCT = "".join(chr(c) for c in range(0x21, 0x7F) if not chr(c).isalnum())


def lower_ascii(s):
    return "".join(chr(ord(c) + 32) if "A" <= c <= "Z" else c for c in s)


def normalize(s):
    words = []
    cur = ""
    for c in lower_ascii(s):
        if c in ASCII_SPACE:
            if cur:
                words.append(cur)
            cur = ""
        else:
            cur += c
    if cur:
        words.append(cur)
    out = " ".join(words)
    while out and out[-1] in ASCII_PUNCT:
        out = out[:-1]
    return out.strip(ASCII_SPACE)


def tokens(s):
    out, cur = [], ""
    for c in normalize(s):
        if c in ASCII_SPACE or c in ASCII_PUNCT:
            if cur:
                out.append(cur)
            cur = ""
        else:
            cur += c
    if cur:
        out.append(cur)
    return out


def edit_distance(a, b):
    sys.setrecursionlimit(10000)

    @lru_cache(maxsize=None)
    def d(i, j):
        if i == 0:
            return j
        if j == 0:
            return i
        return min(d(i - 1, j) + 1, d(i, j - 1) + 1, d(i - 1, j - 1) + (a[i - 1] != b[j - 1]))

    return d(len(a), len(b))


def lcs_len(a, b):
    @lru_cache(maxsize=None)
    def f(i, j):
        if i == len(a) or j == len(b):
            return 0
        if a[i] == b[j]:
            return 1 + f(i + 1, j + 1)
        return max(f(i + 1, j), f(i, j + 1))

    return f(0, 0)


def anls_one(p, g):
    if not p and not g:
        return Fraction(1)
    if not p or not g:
        return Fraction(0)
    s = 1 - Fraction(edit_distance(p, g), max(len(p), len(g)))
    return s if s >= Fraction(1, 2) else Fraction(0)


def f1_one(p, g):
    if not p or not g:
        return Fraction(0)
    pool = list(g)
    overlap = 0
    for t in p:
        if t in pool:
            pool.remove(t)
            overlap += 1
    if overlap == 0:
        return Fraction(0)
    prec, rec = Fraction(overlap, len(p)), Fraction(overlap, len(g))
    return 2 * prec * rec / (prec + rec)


def rouge_one(p, g):
    if not p or not g:
        return Fraction(0)
    l = lcs_len(tuple(p), tuple(g))
    if l == 0:
        return Fraction(0)
    prec, rec = Fraction(l, len(p)), Fraction(l, len(g))
    return 2 * prec * rec / (prec + rec)


CASES = [
    ("kitten", ["sitting"]),
    ("abcd", ["abef"]),
    ("abc", ["xyc"]),
    ("FairFuzz", ["fairfuzz"]),
    ("The answer is 42.", ["the answer is 42"]),
    ("a b c", ["b c d"]),
    ("the cat sat", ["the cat ran"]),
    ("", ["something"]),
    ("", [""]),
    ("completely different", ["nothing alike here"]),
    ("Paris", ["London", "paris"]),
    ("  multiple   spaces\there ", ["multiple spaces here"]),
    ("the the the", ["the cat"]),
    ("café au lait", ["cafe au lait"]),
    ("Figure 3 shows the loss curve", ["The loss curve is shown in Figure 3"]),
    ("sparse sampler, then LLM", ["sparse sampler then llm"]),
    ("flaw", ["lawn"]),
    ("intention", ["execution"]),
    ("A B C D E", ["E D C B A"]),
    ("recall at five", ["recall at 5", "precision at five"]),
]


def main():
    out = []
    for i, (pred, gts) in enumerate(CASES):
        p_norm = normalize(pred)
        p_tok = tokens(pred)
        a = max(anls_one(p_norm, normalize(g)) for g in gts)
        f = max(f1_one(p_tok, tokens(g)) for g in gts)
        r = max(rouge_one(p_tok, tokens(g)) for g in gts)
        out.append({
            "case": i + 1,
            "prediction": pred,
            "gt_answers": gts,
            "anls": [a.numerator, a.denominator],
            "token_f1": [f.numerator, f.denominator],
            "rouge_l": [r.numerator, r.denominator],
            "lev": [edit_distance(p_norm, normalize(g)) for g in gts],
        })
    path = Path(__file__).resolve().parent.parent / "data" / "metric_golden.json"
    path.write_text(json.dumps(out, indent=1, ensure_ascii=False) + "\n", encoding="utf-8")


if __name__ == "__main__":
    main()
