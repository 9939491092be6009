"""Greedy decoding schemes for prompt rewriting.

Two entry points:

* :func:`decode_greedy` rewrites the original prompt with the paraphrase
  model alone (unconstrained baseline).
* :func:`decode_ensemble` selects each token by the weighted sum of log
  probabilities from the target model (conditioned on the generated
  tokens only, since the rewrite must stand alone as a prompt later) and
  the paraphrase model (conditioned on instruction + original +
  generated). The first token comes from the paraphrase model alone. The
  weight ``alpha`` trades semantic fidelity (alpha -> 0) against the
  target model's familiarity with the wording (alpha -> 1).

Both are deterministic: argmax ties resolve to the lowest token id.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import (
    FinishReason,
    GenerationResult,
    LanguageModel,
    TokenSeq,
    detokenize_with,
    ensure_shared_vocabulary,
    perplexity_from_log_prob,
)
from .errors import DecodingStuckError, InvalidInputError

#: Default instruction put in front of the original prompt for the
#: paraphrase model.
DEFAULT_SYSTEM_PROMPT = "Generate ONE paraphrase of the following sentence."


class EmptyGenerationWarning(UserWarning):
    """The decoder selected EOS before emitting any content token."""


@dataclass(frozen=True)
class EnsembleConfig:
    """Settings for ensemble (and plain greedy) decoding."""

    alpha: float = 0.5
    max_len: int = 32
    system_prompt: TokenSeq = ()

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidInputError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.max_len < 1:
            raise InvalidInputError(f"max_len must be >= 1, got {self.max_len}")
        object.__setattr__(self, "system_prompt", tuple(self.system_prompt))


@dataclass
class GenerationState:
    """Evolving record of one decoding run.

    The paraphrase model sees system prompt + original + generated; the
    target model sees the generated tokens only. One (target, paraphrase)
    log-prob pair is cached per emitted token, so the final perplexities
    need no re-querying.
    """

    system: TokenSeq
    original: TokenSeq
    generated: list[int] = field(default_factory=list)
    per_step_scores: list[tuple[float, float]] = field(default_factory=list)

    @property
    def context_para(self) -> TokenSeq:
        return self.system + self.original + tuple(self.generated)

    @property
    def context_tar(self) -> TokenSeq:
        return tuple(self.generated)

    def append(self, token: int, target_lp: float, para_lp: float) -> None:
        self.generated.append(token)
        self.per_step_scores.append((target_lp, para_lp))


def combined_score(alpha: float, lp_tar: np.ndarray, lp_para: np.ndarray) -> np.ndarray:
    """Per-token score ``alpha * lp_tar + (1 - alpha) * lp_para``.

    A boundary coefficient ignores the zero-weighted model entirely, so a
    hard zero there cannot poison the score; with both weights nonzero, a
    ``-inf`` in either input stays ``-inf``.
    """
    if not 0.0 <= alpha <= 1.0:
        raise InvalidInputError(f"alpha must be in [0, 1], got {alpha}")
    if lp_tar.shape != lp_para.shape:
        raise InvalidInputError(f"score vectors differ in length: {lp_tar.shape} vs {lp_para.shape}")
    if alpha == 0.0:
        return lp_para.copy()
    if alpha == 1.0:
        return lp_tar.copy()
    return alpha * lp_tar + (1.0 - alpha) * lp_para


def _argmax_or_stuck(scores: np.ndarray, what: str) -> int:
    token = int(np.argmax(scores))
    if scores[token] == -math.inf:
        raise DecodingStuckError(f"every {what} score is -inf; no token can be selected")
    return token


def _empty_result() -> GenerationResult:
    warnings.warn("decoder emitted no content tokens (EOS came first)", EmptyGenerationWarning, stacklevel=3)
    return GenerationResult(
        tokens=(),
        text="",
        target_perplexity=math.nan,
        paraphrase_conditional_ppl=math.nan,
        finish_reason=FinishReason.EOS,
    )


def _result_from_state(para: LanguageModel, state: GenerationState, finish: FinishReason) -> GenerationResult:
    tokens = tuple(state.generated)
    tar_sum = 0.0
    para_sum = 0.0
    for tar_lp, para_lp in state.per_step_scores:
        tar_sum += tar_lp
        para_sum += para_lp
    return GenerationResult(
        tokens=tokens,
        text=detokenize_with(para, tokens),
        target_perplexity=perplexity_from_log_prob(tar_sum, len(tokens)),
        paraphrase_conditional_ppl=perplexity_from_log_prob(para_sum, len(tokens)),
        finish_reason=finish,
    )


def decode_ensemble(
    para: LanguageModel,
    tar: LanguageModel,
    ori: Sequence[int],
    cfg: EnsembleConfig,
) -> GenerationResult:
    """Rewrite ``ori`` by per-step argmax over the two-model score.

    The first token is the paraphrase model's own argmax; every later
    token maximizes :func:`combined_score`. Stops at EOS or ``max_len``;
    EOS is excluded from the returned tokens and perplexities. An
    EOS-first run returns an empty result and issues
    :class:`EmptyGenerationWarning`.
    """
    ensure_shared_vocabulary(para, tar)
    ori = tuple(ori)
    if not ori:
        raise InvalidInputError("original prompt must be non-empty")
    eos = para.vocabulary.eos_id
    state = GenerationState(system=cfg.system_prompt, original=ori)

    lp_para = para.next_log_probs(state.context_para)
    first = _argmax_or_stuck(lp_para, "first-token")
    if first == eos:
        return _empty_result()
    lp_tar = tar.next_log_probs(())
    state.append(first, float(lp_tar[first]), float(lp_para[first]))

    finish = FinishReason.MAX_LEN
    while len(state.generated) < cfg.max_len:
        lp_tar = tar.next_log_probs(state.context_tar)
        lp_para = para.next_log_probs(state.context_para)
        scores = combined_score(cfg.alpha, lp_tar, lp_para)
        token = _argmax_or_stuck(scores, "combined")
        if token == eos:
            finish = FinishReason.EOS
            break
        state.append(token, float(lp_tar[token]), float(lp_para[token]))
    return _result_from_state(para, state, finish)


def decode_greedy(
    para: LanguageModel,
    tar: LanguageModel,
    ori: Sequence[int],
    cfg: EnsembleConfig,
) -> GenerationResult:
    """Plain greedy rewrite by the paraphrase model, no target constraint.

    ``cfg.alpha`` is ignored. The target model is consulted only to score
    the finished rewrite. This is also the reference the ensemble
    decoder must reproduce at ``alpha = 0``.
    """
    ensure_shared_vocabulary(para, tar)
    ori = tuple(ori)
    if not ori:
        raise InvalidInputError("original prompt must be non-empty")
    eos = para.vocabulary.eos_id
    state = GenerationState(system=cfg.system_prompt, original=ori)

    finish = FinishReason.MAX_LEN
    while len(state.generated) < cfg.max_len:
        lp_para = para.next_log_probs(state.context_para)
        token = _argmax_or_stuck(lp_para, "paraphrase")
        if token == eos:
            finish = FinishReason.EOS
            break
        lp_tar = tar.next_log_probs(state.context_tar)
        state.append(token, float(lp_tar[token]), float(lp_para[token]))
    if not state.generated:
        return _empty_result()
    return _result_from_state(para, state, finish)
