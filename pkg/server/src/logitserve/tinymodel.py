"""Build and briefly train a tiny word-level causal LM checkpoint.

The result is a real, loadable transformer (GPT-2 architecture, two
layers, word-level tokenizer over a small closed vocabulary) that the
server can serve from a local path. It exists so the end-to-end tests
and demos run offline in seconds; the server itself accepts any causal
LM checkpoint.
"""

from __future__ import annotations

from pathlib import Path

import torch
from tokenizers import Tokenizer, models, pre_tokenizers
from transformers import GPT2Config, GPT2LMHeadModel, PreTrainedTokenizerFast

SPECIALS = ("<pad>", "<bos>", "<eos>", "<unk>")

WORDS = (
    "the a cat dog bird man boy girl sat ran sees likes holds on in under "
    "mat rug tree house red blue big small and then very fast slow happy "
    "old new walks sleeps eats plays jumps good day night it was is"
).split()

_SENTENCES = [
    "the cat sat on the mat",
    "the dog ran in the house",
    "a bird sees the tree",
    "the boy likes the dog",
    "the girl holds a red cat",
    "a small dog sleeps under the tree",
    "the old man walks in the day",
    "the happy girl plays and jumps",
    "a big cat eats fast",
    "the new house is big",
    "it was a good day",
    "the night was very slow",
    "the dog jumps on the rug",
    "a boy and a girl ran fast",
    "the red bird sleeps in the tree",
    "the man sees a blue house",
    "a happy dog plays in the house",
    "the cat likes the small bird",
    "the girl walks under the big tree",
    "it is a very happy day",
]


def training_corpus() -> list[str]:
    # the fixed sentences plus simple recombinations, enough signal for
    # a two-layer model to pick up the common bigrams
    lines = list(_SENTENCES)
    subjects = ["the cat", "the dog", "a bird", "the boy", "the girl", "the man"]
    verbs = ["sat on the mat", "ran in the house", "sees the tree", "plays in the day", "sleeps under the tree"]
    for s in subjects:
        for v in verbs:
            lines.append(f"{s} {v}")
    return lines


def build_tiny_model(out_dir: str | Path, seed: int = 0, steps: int = 400, lr: float = 5e-3) -> Path:
    """Train the tiny checkpoint and save model + tokenizer to ``out_dir``."""
    out_dir = Path(out_dir)
    torch.manual_seed(seed)

    vocab = {tok: i for i, tok in enumerate(SPECIALS + tuple(WORDS))}
    word_level = Tokenizer(models.WordLevel(vocab, unk_token="<unk>"))
    word_level.pre_tokenizer = pre_tokenizers.WhitespaceSplit()
    tokenizer = PreTrainedTokenizerFast(
        tokenizer_object=word_level,
        pad_token="<pad>",
        bos_token="<bos>",
        eos_token="<eos>",
        unk_token="<unk>",
    )

    config = GPT2Config(
        vocab_size=len(vocab),
        n_positions=128,
        n_embd=64,
        n_layer=2,
        n_head=2,
        bos_token_id=tokenizer.bos_token_id,
        eos_token_id=tokenizer.eos_token_id,
        pad_token_id=tokenizer.pad_token_id,
    )
    model = GPT2LMHeadModel(config)
    model.train()

    lines = training_corpus()
    encoded = [
        [tokenizer.bos_token_id] + tokenizer.encode(line, add_special_tokens=False) + [tokenizer.eos_token_id]
        for line in lines
    ]
    width = max(len(ids) for ids in encoded)
    pad = tokenizer.pad_token_id
    input_ids = torch.tensor([ids + [pad] * (width - len(ids)) for ids in encoded])
    attention = (input_ids != pad).long()
    labels = input_ids.masked_fill(input_ids == pad, -100)

    optimizer = torch.optim.AdamW(model.parameters(), lr=lr)
    for _ in range(steps):
        optimizer.zero_grad()
        loss = model(input_ids=input_ids, attention_mask=attention, labels=labels).loss
        loss.backward()
        optimizer.step()

    model.eval()
    out_dir.mkdir(parents=True, exist_ok=True)
    model.save_pretrained(out_dir)
    tokenizer.save_pretrained(out_dir)
    return out_dir


if __name__ == "__main__":
    import argparse

    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", required=True, help="checkpoint output directory")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--steps", type=int, default=400)
    args = ap.parse_args()
    path = build_tiny_model(args.out, seed=args.seed, steps=args.steps)
    print(f"saved tiny checkpoint to {path}")
