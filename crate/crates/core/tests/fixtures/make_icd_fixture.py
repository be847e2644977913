"""Pinned ICD values evaluated at 50 digits with mpmath.

Each case is a batch of (truth, generated) integer vectors; the value is the
mean of 1 / (cos + eps) with eps = 1e-8 and negative cosines floored at 0.
"""
import json
from mpmath import mp, mpf, sqrt

mp.dps = 50
EPS = mpf("1e-8")

CASES = [
    [([1, 0], [1, 0])],
    [([1, 0], [0, 1])],
    [([1, 2, 3], [4, 5, 6])],
    [([1, 1], [1, 0])],
    [([3, 4], [4, 3])],
    [([1, 2, 3], [1, 2, 3]), ([1, 0, 0], [0, 1, 0])],
    [([2, -1, 0, 5], [1, 1, 1, 1]), ([0, 3, 1, 2], [1, 0, 2, 2])],
    [([1, 0], [-1, 0])],
    [([1, 2], [2, 1]), ([5, 1], [1, 5]), ([7, 7], [7, 8])],
    [([1, 0, 0, 0, 0, 1], [1, 1, 1, 1, 1, 1])],
    [([10, -3, 4], [-2, 8, 1]), ([1, 1, 1], [1, 1, 2])],
    [([1, 2, 3, 4, 5, 6, 7, 8], [8, 7, 6, 5, 4, 3, 2, 1])],
]


def cos(t, g):
    dot = sum(mpf(a) * b for a, b in zip(t, g))
    return dot / (sqrt(sum(mpf(a) ** 2 for a in t)) * sqrt(sum(mpf(b) ** 2 for b in g)))


with open("icd_cases.json", "w") as f:
    out = []
    for batch in CASES:
        terms = [1 / (max(cos(t, g), 0) + EPS) for t, g in batch]
        out.append({"pairs": [{"truth": t, "generated": g} for t, g in batch],
                    "icd": mp.nstr(sum(terms) / len(terms), 25)})
    json.dump(out, f, indent=1)
    f.write("\n")
