"""Deterministic, exactly computable language models and tokenizers.

These serve as fixtures and oracles: a table-driven model whose rows are
spelled out (in code or in a JSON fixture file), an additively smoothed
n-gram model trained on a plain-text corpus, and the whitespace tokenizer
both share. All of them satisfy the distribution invariants of
:mod:`paralow.core` to 1e-9 and are immutable once built, so they can be
shared freely across workers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import Vocabulary
from .errors import InvalidInputError

EOS_TOKEN = "<eos>"
UNK_TOKEN = "<unk>"
# Reserved word forms a corpus is not allowed to redefine. BOS never gets a
# token id: it exists only as left-padding context inside n-gram counts.
RESERVED_TOKENS = ("<bos>", EOS_TOKEN, UNK_TOKEN)

# Fixture files may name their EOS/UNK tokens without the angle brackets.
_EOS_NAMES = (EOS_TOKEN, "eos", "</s>")
_UNK_NAMES = (UNK_TOKEN, "unk")

# Sentinel id used to left-pad n-gram contexts before the first token.
_BOS_PAD = -1

_ROW_SUM_TOL = 1e-6


def _normalized_row(row: np.ndarray, label: str) -> np.ndarray:
    row = np.asarray(row, dtype=np.float64)
    if (row < 0).any() or np.isnan(row).any():
        raise InvalidInputError(f"row for {label} contains negative or NaN probabilities")
    total = row.sum()
    if abs(total - 1.0) > _ROW_SUM_TOL:
        raise InvalidInputError(f"row for {label} sums to {total!r}, expected 1.0 within {_ROW_SUM_TOL:g}")
    return row / total


def _log_row(row: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(row)


class TableLM:
    """Model whose next-token rows are an explicit context-suffix table.

    Queries match the longest stored suffix of the context (up to
    ``order`` tokens) and fall back to the mandatory default row. Rows
    are renormalized at construction, so stored log rows are exact.
    """

    def __init__(
        self,
        vocabulary: Vocabulary,
        order: int,
        rows: Mapping[tuple[int, ...], Sequence[float]],
        default_row: Sequence[float],
    ) -> None:
        if order < 0:
            raise InvalidInputError("order must be >= 0")
        self._vocabulary = vocabulary
        self.order = order
        self._log_rows: dict[tuple[int, ...], np.ndarray] = {}
        for ctx, row in rows.items():
            ctx = tuple(ctx)
            if len(ctx) > order:
                raise InvalidInputError(f"context {ctx} longer than order {order}")
            vocabulary.check_ids(ctx)
            probs = _normalized_row(np.asarray(row), f"context {ctx}")
            if len(probs) != vocabulary.size:
                raise InvalidInputError(f"row for context {ctx} has length {len(probs)}, expected {vocabulary.size}")
            self._log_rows[ctx] = _log_row(probs)
        default = _normalized_row(np.asarray(default_row), "default_row")
        if len(default) != vocabulary.size:
            raise InvalidInputError(f"default_row has length {len(default)}, expected {vocabulary.size}")
        self._log_default = _log_row(default)
        self._token_to_id = {t: i for i, t in enumerate(vocabulary.tokens)}

    @property
    def vocabulary(self) -> Vocabulary:
        return self._vocabulary

    def next_log_probs(self, context: Sequence[int]) -> np.ndarray:
        self._vocabulary.check_ids(context)
        ctx = tuple(context)
        for take in range(min(self.order, len(ctx)), 0, -1):
            row = self._log_rows.get(ctx[len(ctx) - take :])
            if row is not None:
                return row.copy()
        row = self._log_rows.get(())
        if row is not None:
            return row.copy()
        return self._log_default.copy()

    # Word-per-token text surface, so table fixtures can run through the
    # same CLI and evaluation paths as trained models. Unknown words map
    # to the UNK token when the vocabulary has one and are dropped
    # otherwise; text can never produce the EOS id.
    def tokenize(self, text: str) -> list[int]:
        unk = self._token_to_id.get(UNK_TOKEN)
        eos = self._vocabulary.eos_id
        ids = []
        for word in text.split():
            tok = self._token_to_id.get(word, unk)
            if tok == eos:
                tok = unk
            if tok is not None:
                ids.append(tok)
        return ids

    def detokenize(self, ids: Sequence[int]) -> str:
        self._vocabulary.check_ids(ids)
        return " ".join(self._vocabulary.tokens[i] for i in ids)


def _find_special(tokens: Sequence[str], names: Sequence[str], explicit: str | None, kind: str) -> int:
    if explicit is not None:
        if explicit not in tokens:
            raise InvalidInputError(f"declared {kind} token {explicit!r} is not in the vocab list")
        return tokens.index(explicit)
    for name in names:
        if name in tokens:
            return tokens.index(name)
    raise InvalidInputError(f"fixture defines no {kind} token (expected one of {list(names)})")


def table_lm_from_fixture(doc: Mapping) -> TableLM:
    """Build a :class:`TableLM` from a parsed fixture document.

    Expected keys: ``vocab`` (ordered token list), ``order``, ``rows``
    (context string, space-separated token names, to probability map) and
    ``default_row``. ``eos`` / ``bos`` may name the sentinel tokens
    explicitly; otherwise a token named ``eos``/``<eos>`` is required.
    """
    try:
        tokens = tuple(str(t) for t in doc["vocab"])
        order = int(doc.get("order", 0))
        raw_rows = doc.get("rows", {})
        default_row = doc["default_row"]
    except KeyError as exc:
        raise InvalidInputError(f"fixture is missing required key {exc.args[0]!r}") from None
    eos_id = _find_special(tokens, _EOS_NAMES, doc.get("eos"), "eos")
    bos_id = tokens.index(doc["bos"]) if doc.get("bos") is not None else None
    if doc.get("bos") is not None and doc["bos"] not in tokens:
        raise InvalidInputError(f"declared bos token {doc['bos']!r} is not in the vocab list")
    vocab = Vocabulary(tokens=tokens, eos_id=eos_id, bos_id=bos_id)
    token_to_id = {t: i for i, t in enumerate(tokens)}

    def to_row(mapping: Mapping[str, float], label: str) -> np.ndarray:
        row = np.zeros(len(tokens))
        for name, prob in mapping.items():
            if name not in token_to_id:
                raise InvalidInputError(f"row for {label} names unknown token {name!r}")
            row[token_to_id[name]] = float(prob)
        # validate here too, so the error names the readable context
        _normalized_row(row, label)
        return row

    rows: dict[tuple[int, ...], np.ndarray] = {}
    for ctx_str, mapping in raw_rows.items():
        names = str(ctx_str).split()
        if not names:
            raise InvalidInputError("empty row context: use default_row for the unconditional row")
        try:
            ctx = tuple(token_to_id[n] for n in names)
        except KeyError as exc:
            raise InvalidInputError(f"row context {ctx_str!r} names unknown token {exc.args[0]!r}") from None
        rows[ctx] = to_row(mapping, f"context {ctx_str!r}")
    return TableLM(vocab, order, rows, to_row(default_row, "default_row"))


def load_table_lm(path: str | Path) -> TableLM:
    """Load a JSON table-model fixture from disk."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidInputError(f"{path}: invalid JSON ({exc.msg})") from None
    return table_lm_from_fixture(doc)


def random_table_lm(seed: int, vocab_size: int, order: int = 0) -> TableLM:
    """Reproducible random table model for statistical and oracle tests.

    Every row is drawn as normalized positive weights (uniform on
    [0.1, 1), so no probability is vanishingly small) from a generator
    seeded with ``seed``; identical seeds give bitwise-identical models.
    Content tokens come first, EOS last.
    """
    if vocab_size < 2:
        raise InvalidInputError("vocab_size must be >= 2")
    if order < 0:
        raise InvalidInputError("order must be >= 0")
    if vocab_size**order > 100_000:
        raise InvalidInputError("vocab_size**order too large to materialize")
    letters = "abcdefghijklmnopqrstuvwxyz"
    n_content = vocab_size - 1
    if n_content <= len(letters):
        tokens = tuple(letters[:n_content]) + ("eos",)
    else:
        tokens = tuple(f"w{i}" for i in range(n_content)) + ("eos",)
    vocab = Vocabulary(tokens=tokens, eos_id=vocab_size - 1)
    rng = np.random.default_rng(seed)

    def draw() -> np.ndarray:
        weights = rng.uniform(0.1, 1.0, vocab_size)
        return weights / weights.sum()

    default_row = draw()
    rows: dict[tuple[int, ...], np.ndarray] = {}
    if order >= 1:
        for ctx in np.ndindex(*([vocab_size] * order)):
            rows[tuple(int(i) for i in ctx)] = draw()
    return TableLM(vocab, order, rows, default_row)


@dataclass(frozen=True)
class WhitespaceTokenizer:
    """Word-level tokenizer over a fixed corpus vocabulary.

    Token ids: sorted corpus word types first, then UNK, then EOS (last).
    Unseen words map to UNK. ``detokenize(tokenize(text))`` reproduces
    ``text`` up to whitespace normalization for in-vocabulary text.
    """

    vocabulary: Vocabulary

    @classmethod
    def from_corpus(cls, corpus: Iterable[str]) -> "WhitespaceTokenizer":
        types = sorted({w for line in corpus for w in line.split()} - set(RESERVED_TOKENS))
        tokens = tuple(types) + (UNK_TOKEN, EOS_TOKEN)
        return cls(Vocabulary(tokens=tokens, eos_id=len(tokens) - 1))

    @property
    def unk_id(self) -> int:
        return self.vocabulary.size - 2

    @property
    def eos_id(self) -> int:
        return self.vocabulary.eos_id

    def tokenize(self, text: str) -> list[int]:
        # Reserved forms are not reachable from text; they come out as UNK.
        lookup = {t: i for i, t in enumerate(self.vocabulary.tokens[: self.unk_id])}
        return [lookup.get(w, self.unk_id) for w in text.split()]

    def detokenize(self, ids: Sequence[int]) -> str:
        self.vocabulary.check_ids(ids)
        return " ".join(self.vocabulary.tokens[i] for i in ids)


class NGramLM:
    """Additively smoothed n-gram model.

    P(t | ctx) = (count(ctx, t) + a) / (count(ctx) + a * |V|), where the
    context is the last ``order - 1`` tokens, left-padded with a
    non-vocabulary BOS sentinel near the sequence start. Rows sum to 1 by
    construction (the denominator is the sum of the numerators).
    """

    def __init__(
        self,
        vocabulary: Vocabulary,
        order: int,
        counts: Mapping[tuple[int, ...], np.ndarray],
        smoothing_alpha: float,
        tokenizer: WhitespaceTokenizer | None = None,
    ) -> None:
        if order < 1:
            raise InvalidInputError("order must be >= 1")
        if not smoothing_alpha > 0:
            raise InvalidInputError("smoothing_alpha must be > 0")
        self._vocabulary = vocabulary
        self.order = order
        self.smoothing_alpha = float(smoothing_alpha)
        self._counts = {tuple(k): np.asarray(v, dtype=np.float64) for k, v in counts.items()}
        self._tokenizer = tokenizer
        self._zeros = np.zeros(vocabulary.size)

    @property
    def vocabulary(self) -> Vocabulary:
        return self._vocabulary

    def _context_key(self, context: Sequence[int]) -> tuple[int, ...]:
        ctx = tuple(context)[max(0, len(context) - (self.order - 1)) :]
        return (_BOS_PAD,) * (self.order - 1 - len(ctx)) + ctx

    def context_count(self, context: Sequence[int]) -> float:
        """Total occurrences of the (padded) context in the training corpus."""
        return float(self._counts.get(self._context_key(context), self._zeros).sum())

    def next_log_probs(self, context: Sequence[int]) -> np.ndarray:
        self._vocabulary.check_ids(context)
        counts = self._counts.get(self._context_key(context), self._zeros)
        numerators = counts + self.smoothing_alpha
        return _log_row(numerators / numerators.sum())

    def tokenize(self, text: str) -> list[int]:
        if self._tokenizer is None:
            raise InvalidInputError("this n-gram model was built without a tokenizer")
        return self._tokenizer.tokenize(text)

    def detokenize(self, ids: Sequence[int]) -> str:
        if self._tokenizer is None:
            raise InvalidInputError("this n-gram model was built without a tokenizer")
        return self._tokenizer.detokenize(ids)


def train_ngram(
    corpus: Sequence[str],
    order: int,
    smoothing_alpha: float,
    tokenizer: WhitespaceTokenizer | None = None,
) -> NGramLM:
    """Count n-grams over a line corpus and return the smoothed model.

    Each line is one sequence: left-padded with ``order - 1`` BOS
    sentinels and terminated with EOS. Pass a shared ``tokenizer`` to
    train several models over one vocabulary.
    """
    corpus = list(corpus)
    if not corpus:
        raise InvalidInputError("corpus must contain at least one line")
    if order < 1:
        raise InvalidInputError("order must be >= 1")
    if not smoothing_alpha > 0:
        raise InvalidInputError("smoothing_alpha must be > 0")
    if tokenizer is None:
        tokenizer = WhitespaceTokenizer.from_corpus(corpus)
    vocab = tokenizer.vocabulary
    counts: dict[tuple[int, ...], np.ndarray] = {}
    for line in corpus:
        ids = tokenizer.tokenize(line) + [tokenizer.eos_id]
        seq = [_BOS_PAD] * (order - 1) + ids
        for i in range(order - 1, len(seq)):
            ctx = tuple(seq[i - order + 1 : i])
            row = counts.get(ctx)
            if row is None:
                row = counts[ctx] = np.zeros(vocab.size)
            row[seq[i]] += 1.0
    return NGramLM(vocab, order, counts, smoothing_alpha, tokenizer=tokenizer)


def load_corpus(path: str | Path) -> list[str]:
    """Read a plain-text corpus, one sequence per line."""
    with open(path, "r", encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh]
