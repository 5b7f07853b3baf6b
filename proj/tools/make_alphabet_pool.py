#!/usr/bin/env python3
"""Regenerates data/alphabet_pool.txt.

The pool stands in for an LLM vocabulary when sampling random alphabets
offline: plain words, CJK ideographs and two-character symbol clusters.
Output is deterministic for a given Python installation.
"""
import glob
import random
import re
import sys

SYMBOLS = "!#$%&*+-./<=>?@^_|~()[]{}"


def collect_words():
    words = set()
    for path in glob.glob("/usr/lib/python3*/**/*.py", recursive=True):
        try:
            text = open(path, encoding="utf-8").read()
        except (OSError, UnicodeDecodeError):
            continue
        words.update(re.findall(r"\b[A-Za-z][a-z]{2,11}\b", text))
    return sorted(words)


def main(out_path):
    rng = random.Random(20230710)
    words = collect_words()
    rng.shuffle(words)
    pool = words[:3600]
    pool += [chr(cp) for cp in range(0x4E00, 0x4E00 + 1200)]
    pool += [a + b for a in SYMBOLS for b in SYMBOLS if a != b][:420]
    seen = set()
    with open(out_path, "w", encoding="utf-8") as out:
        for tok in pool:
            if tok in seen or any(c in tok for c in ",;:\n ") or "---" in tok:
                continue
            seen.add(tok)
            out.write(tok + "\n")
    print(f"wrote {len(seen)} tokens to {out_path}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "data/alphabet_pool.txt")
