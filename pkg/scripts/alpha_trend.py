#!/usr/bin/env python3
"""How the ensemble coefficient moves target perplexity, on n-gram pairs.

For each seeded pair of bigram models (trained on structured random
corpora over a small shared vocabulary) this decodes a few prompts at
each coefficient and reports the mean target perplexity, plus the
fraction of pairs where the heavier target weight gave a rewrite the
target model finds at least as familiar.

Usage: python scripts/alpha_trend.py [--pairs 100] [--alphas 0.2,0.5,0.7]
"""

import argparse
import math
import warnings

import numpy as np

from paralow.ensemble import EnsembleConfig, decode_ensemble
from paralow.toy import WhitespaceTokenizer, train_ngram

WORDS = ("the", "cat", "dog", "runs", "sat", "on", "mat", "fast", "big", "red")


def markov_corpus(rng, n_lines=20, length=10):
    n = len(WORDS)
    trans = np.zeros((n, n))
    for i in range(n):
        favored = rng.choice(n, size=2, replace=False)
        row = rng.uniform(0.02, 0.1, n)
        row[favored] += rng.uniform(1.0, 2.0, 2)
        trans[i] = row / row.sum()
    lines = []
    for _ in range(n_lines):
        w = int(rng.integers(0, n))
        seq = [w]
        for _ in range(length - 1):
            w = int(rng.choice(n, p=trans[w]))
            seq.append(w)
        lines.append(" ".join(WORDS[i] for i in seq))
    return lines


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--pairs", type=int, default=100)
    ap.add_argument("--alphas", default="0.2,0.5,0.7")
    ap.add_argument("--prompts-per-pair", type=int, default=3)
    ap.add_argument("--max-len", type=int, default=8)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    alphas = [float(a) for a in args.alphas.split(",")]

    tokenizer = WhitespaceTokenizer.from_corpus([" ".join(WORDS)])
    per_alpha_means = {a: [] for a in alphas}
    lo, hi = min(alphas), max(alphas)
    wins = decided = 0

    for pair in range(args.pairs):
        rng = np.random.default_rng(args.seed + 5000 + pair)
        para = train_ngram(markov_corpus(rng), 2, 0.5, tokenizer=tokenizer)
        tar = train_ngram(markov_corpus(rng), 2, 0.5, tokenizer=tokenizer)
        prng = np.random.default_rng(args.seed + 9000 + pair)
        prompts = []
        for _ in range(20):
            ori = tuple(tokenizer.tokenize(" ".join(prng.choice(WORDS, size=4))))
            if int(np.argmax(para.next_log_probs(ori))) != para.vocabulary.eos_id:
                prompts.append(ori)
                if len(prompts) == args.prompts_per_pair:
                    break
        if not prompts:
            continue
        means = {}
        for alpha in alphas:
            vals = []
            for ori in prompts:
                cfg = EnsembleConfig(alpha=alpha, max_len=args.max_len, system_prompt=())
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    r = decode_ensemble(para, tar, ori, cfg)
                if not math.isnan(r.target_perplexity):
                    vals.append(r.target_perplexity)
            means[alpha] = sum(vals) / len(vals) if vals else math.nan
            if not math.isnan(means[alpha]):
                per_alpha_means[alpha].append(means[alpha])
        if not math.isnan(means[hi]) and not math.isnan(means[lo]):
            decided += 1
            if means[hi] <= means[lo]:
                wins += 1

    print(f"{'alpha':>6}  {'mean target ppl':>16}  pairs")
    for alpha in alphas:
        vals = per_alpha_means[alpha]
        mean = sum(vals) / len(vals) if vals else math.nan
        print(f"{alpha:>6.2f}  {mean:>16.4f}  {len(vals)}")
    print(f"\nppl(alpha={hi:g}) <= ppl(alpha={lo:g}) in {wins}/{decided} decided pairs")


if __name__ == "__main__":
    main()
