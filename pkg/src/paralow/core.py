"""Language-model interface, vocabulary, and probability arithmetic.

Everything downstream (decoders, evaluation, remote client) speaks the
types defined here: token-id sequences, natural-log next-token
distributions of a fixed vocabulary size, and the geometric-mean inverse
probability ("perplexity") of a sequence.

Conventions:
  * All probability arithmetic is in natural-log space, float64.
  * A hard-zero probability is represented as ``-inf``, never floored.
  * An empty context means "start of sequence": models that declare a BOS
    token condition on it implicitly; callers never pass BOS themselves.
"""

from __future__ import annotations

import enum
import hashlib
import math
from dataclasses import dataclass
from typing import Protocol, Sequence, runtime_checkable

import numpy as np
from scipy.special import logsumexp

from .errors import InvalidInputError, VocabMismatchError

# Token-id sequence: the universal currency of contexts, prompts and
# generations.
TokenSeq = tuple[int, ...]

#: |logsumexp| tolerance for distributions computed in-process.
LOCAL_NORMALIZATION_TOL = 1e-6
#: |logsumexp| tolerance for distributions received from a remote backend.
REMOTE_NORMALIZATION_TOL = 1e-3


def vocab_hash(tokens: Sequence[str]) -> str:
    """SHA-256 over the newline-joined token strings, lowercase hex."""
    return hashlib.sha256("\n".join(tokens).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class Vocabulary:
    """Dense token-id space shared by every model in a decoding run.

    Ids are the indices into ``tokens``. ``eos_id`` is mandatory (decoders
    need a stop symbol); ``bos_id`` is optional and, when present, marks
    the implicit start-of-sequence conditioning token.
    """

    tokens: tuple[str, ...]
    eos_id: int
    bos_id: int | None = None
    vocab_hash: str = ""

    def __post_init__(self) -> None:
        if len(self.tokens) < 1:
            raise InvalidInputError("vocabulary must contain at least one token")
        if not 0 <= self.eos_id < len(self.tokens):
            raise InvalidInputError(f"eos_id {self.eos_id} out of range for size {len(self.tokens)}")
        if self.bos_id is not None and not 0 <= self.bos_id < len(self.tokens):
            raise InvalidInputError(f"bos_id {self.bos_id} out of range for size {len(self.tokens)}")
        expected = vocab_hash(self.tokens)
        if self.vocab_hash and self.vocab_hash != expected:
            raise InvalidInputError(
                f"stored vocab_hash {self.vocab_hash!r} does not match recomputed {expected!r}"
            )
        if not self.vocab_hash:
            object.__setattr__(self, "vocab_hash", expected)

    @property
    def size(self) -> int:
        return len(self.tokens)

    def check_ids(self, ids: Sequence[int]) -> None:
        """Raise :class:`InvalidInputError` if any id is outside the vocabulary."""
        for i in ids:
            if not 0 <= i < self.size:
                raise InvalidInputError(f"token id {i} out of range for vocabulary of size {self.size}")


class ModelRole(enum.Enum):
    """The two model slots of a decoding run."""

    PARAPHRASE = "paraphrase"
    TARGET = "target"


@runtime_checkable
class LanguageModel(Protocol):
    """Read-only autoregressive model over a fixed vocabulary.

    Implementations must be deterministic (identical context, identical
    vector) and safe to query from concurrent workers. ``context`` holds
    content token ids only; implementations that define a BOS token treat
    an empty context as "immediately after BOS".
    """

    @property
    def vocabulary(self) -> Vocabulary: ...

    def next_log_probs(self, context: Sequence[int]) -> np.ndarray:
        """Normalized next-token distribution in natural-log space."""
        ...


@runtime_checkable
class TextCodec(Protocol):
    """Optional text surface of a model: token ids <-> text."""

    def tokenize(self, text: str) -> list[int]: ...

    def detokenize(self, ids: Sequence[int]) -> str: ...


def log_prob_violation(values: np.ndarray, size: int, tol: float) -> str | None:
    """Check a next-token distribution; return a failure description or None.

    Checks, in order: length, NaN, positivity (every entry must be a log
    probability, <= 0 or -inf), and normalization (|logsumexp| <= tol).
    """
    if values.ndim != 1 or len(values) != size:
        return f"length {values.shape} does not match vocabulary size {size}"
    if np.isnan(values).any():
        return "vector contains NaN"
    if (values > 0.0).any():
        worst = float(values.max())
        return f"vector contains a positive log probability ({worst:.6g})"
    lse = float(logsumexp(values))
    if not abs(lse) <= tol:
        return f"normalization off: |logsumexp| = {abs(lse):.6g} exceeds {tol:g}"
    return None


def validate_log_probs(values: np.ndarray, size: int, tol: float = LOCAL_NORMALIZATION_TOL) -> np.ndarray:
    """Validate a distribution in place, raising :class:`InvalidInputError`."""
    problem = log_prob_violation(values, size, tol)
    if problem is not None:
        raise InvalidInputError(f"bad log-probability vector: {problem}")
    return values


def sequence_log_prob(model: LanguageModel, seq: Sequence[int], context: Sequence[int] = ()) -> float:
    """Sum of per-token log probabilities of ``seq`` continued after ``context``.

    Returns ``-inf`` if any step has zero probability. ``seq`` must be
    non-empty; an empty ``context`` means start of sequence.
    """
    seq = tuple(seq)
    if not seq:
        raise InvalidInputError("sequence_log_prob requires a non-empty sequence")
    vocab = model.vocabulary
    vocab.check_ids(seq)
    vocab.check_ids(context)
    total = 0.0
    running = tuple(context)
    for tok in seq:
        lp = float(model.next_log_probs(running)[tok])
        total += lp
        if total == -math.inf:
            return -math.inf
        running = running + (tok,)
    return total


def perplexity(model: LanguageModel, seq: Sequence[int]) -> float:
    """Geometric-mean inverse probability of ``seq`` under ``model``.

    Scored over content tokens from the start of sequence: a trailing EOS
    is excluded from both the product and the length, so scores of
    completed and in-flight generations stay comparable. EOS anywhere
    else is rejected. Returns ``+inf`` when any step has zero probability.
    """
    seq = tuple(seq)
    if not seq:
        raise InvalidInputError("perplexity requires a non-empty sequence")
    eos = model.vocabulary.eos_id
    content = seq[:-1] if seq[-1] == eos else seq
    if not content:
        raise InvalidInputError("perplexity requires at least one content token (sequence was only EOS)")
    if eos in content:
        raise InvalidInputError("EOS may only appear as the final element of the sequence")
    total = sequence_log_prob(model, content)
    return perplexity_from_log_prob(total, len(content))


def perplexity_from_log_prob(total_log_prob: float, length: int) -> float:
    """exp(-total/length) with the zero-probability case mapped to +inf."""
    if length < 1:
        raise InvalidInputError("length must be >= 1")
    if total_log_prob == -math.inf:
        return math.inf
    return math.exp(-total_log_prob / length)


def ensure_shared_vocabulary(para: LanguageModel, tar: LanguageModel) -> None:
    """Refuse model pairs whose vocabularies differ (by hash)."""
    if para.vocabulary.vocab_hash != tar.vocabulary.vocab_hash:
        raise VocabMismatchError(
            "paraphrase and target models must share a vocabulary: "
            f"{para.vocabulary.vocab_hash[:12]}... != {tar.vocabulary.vocab_hash[:12]}..."
        )


class FinishReason(enum.Enum):
    """Why a decoding run stopped."""

    EOS = "eos"
    MAX_LEN = "max_len"


@dataclass(frozen=True)
class GenerationResult:
    """A finished generation plus the two perplexities that score it.

    ``target_perplexity`` scores the tokens as a standalone prompt under
    the target model; ``paraphrase_conditional_ppl`` scores them as a
    continuation of system-prompt + original under the paraphrase model.
    Both are NaN for an empty generation (EOS selected first).
    """

    tokens: TokenSeq
    text: str
    target_perplexity: float
    paraphrase_conditional_ppl: float
    finish_reason: FinishReason

    @property
    def is_empty(self) -> bool:
        return len(self.tokens) == 0


def detokenize_with(model: LanguageModel, ids: Sequence[int]) -> str:
    """Best-effort text for a token sequence.

    Uses the model's codec when it has one, otherwise joins the
    vocabulary's token strings with spaces.
    """
    if isinstance(model, TextCodec):
        return model.detokenize(list(ids))
    tokens = model.vocabulary.tokens
    return " ".join(tokens[i] for i in ids)
