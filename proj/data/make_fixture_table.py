#!/usr/bin/env python3
"""Writes the fixture embedding table used by tests and demo configs.

Each word is a unit vector of hashed character-bigram counts (with ^ and $
boundary marks), so every component is >= 0 and similarly spelled words
land close together.
"""
import argparse
import math


def fnv1a(text):
    h = 0xcbf29ce484222325
    for b in text.encode():
        h ^= b
        h = (h * 0x100000001b3) & 0xFFFFFFFFFFFFFFFF
    return h


def vector(word, dim):
    v = [0.0] * dim
    marked = "^" + word + "$"
    for i in range(len(marked) - 1):
        v[fnv1a(marked[i:i + 2]) % dim] += 1.0
    n = math.sqrt(sum(x * x for x in v))
    return [x / n for x in v]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--lexicon", default="lexicon.txt")
    ap.add_argument("--dim", type=int, default=32)
    ap.add_argument("--out", default="fixture_table.txt")
    args = ap.parse_args()
    words = [w.strip() for w in open(args.lexicon) if w.strip()]
    with open(args.out, "w") as f:
        f.write("dim %d\n" % args.dim)
        for w in words:
            f.write(w + " " + " ".join("%.17g" % x for x in vector(w, args.dim)) + "\n")


if __name__ == "__main__":
    main()
