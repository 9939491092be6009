#!/usr/bin/env python3
"""Paraphrase-side vs target-side perplexity of greedy rewrites.

Trains one bigram model over a small vocabulary, uses it for both roles,
greedily rewrites random prompts, and exports each rewrite's conditional
perplexity (as the rewriter's output) against its standalone perplexity
(as the executor's input). A low score on one axis need not mean a low
score on the other; the printed rank correlation quantifies that.

Usage: python scripts/scatter_demo.py --output scatter.csv [--prompts 50]
"""

import argparse
import warnings

import numpy as np

from paralow.ensemble import EnsembleConfig
from paralow.evalharness import scatter_export, scatter_rank_correlation, write_scatter_csv
from paralow.toy import WhitespaceTokenizer, train_ngram

WORDS = ("the", "cat", "dog", "runs", "sat", "on", "mat", "fast", "big", "red")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--prompts", type=int, default=50)
    ap.add_argument("--max-len", type=int, default=8)
    ap.add_argument("--seed", type=int, default=777)
    ap.add_argument("--output", required=True, help="scatter CSV path")
    args = ap.parse_args()

    tokenizer = WhitespaceTokenizer.from_corpus([" ".join(WORDS)])
    rng = np.random.default_rng(args.seed)
    corpus = [
        " ".join(rng.choice(WORDS, size=int(rng.integers(8, 15)))) for _ in range(30)
    ]
    model = train_ngram(corpus, 2, 1.0, tokenizer=tokenizer)

    prompts = [
        " ".join(np.random.default_rng(args.seed + 457 + i).choice(WORDS, size=4))
        for i in range(args.prompts)
    ]
    cfg = EnsembleConfig(max_len=args.max_len, system_prompt=())
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rows, skipped = scatter_export(model, model, prompts, cfg)
    with open(args.output, "w", encoding="utf-8") as fh:
        write_scatter_csv(fh, rows)
    for note in skipped:
        print(f"skipped: {note}")
    print(f"wrote {len(rows)} rows to {args.output}")
    print(f"spearman rank correlation: {scatter_rank_correlation(rows):+.4f}")


if __name__ == "__main__":
    main()
