"""Beam search that keeps the rewrites the target model is most familiar with.

Each step (i) expands every unfinished beam member with the paraphrase
model's top proposals, (ii) scores each extended candidate by its
perplexity under the target model, and (iii) keeps the ``k`` lowest.
Candidates that hit EOS are frozen (never expanded again) but stay in
the beam and compete in the final selection. The loop ends as soon as
any beam member is complete, or at ``max_len``.

:func:`brute_force_reference` re-derives the same procedure with no
incremental caching or shared helpers; it exists purely as a
small-scale correctness oracle for :func:`decode_search`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
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
    sequence_log_prob,
)
from .ensemble import EmptyGenerationWarning
from .errors import InvalidInputError, OracleScaleError

# Hard caps for the brute-force oracle; beyond this it refuses to run.
ORACLE_MAX_VOCAB = 8
ORACLE_MAX_LEN = 6


@dataclass(frozen=True)
class SearchConfig:
    """Settings for search decoding.

    ``k`` is the number of candidate sequences retained per step;
    ``expand_width`` is how many next tokens the paraphrase model
    proposes per candidate (defaults to ``k``).
    """

    k: int = 4
    expand_width: int | None = None
    max_len: int = 32
    system_prompt: TokenSeq = ()

    def __post_init__(self) -> None:
        if self.k < 1:
            raise InvalidInputError(f"k must be >= 1, got {self.k}")
        if self.expand_width is not None and self.expand_width < 1:
            raise InvalidInputError(f"expand_width must be >= 1, got {self.expand_width}")
        if self.max_len < 1:
            raise InvalidInputError(f"max_len must be >= 1, got {self.max_len}")
        object.__setattr__(self, "system_prompt", tuple(self.system_prompt))

    @property
    def width(self) -> int:
        return self.k if self.expand_width is None else self.expand_width


@dataclass(frozen=True)
class Candidate:
    """A scored partial rewrite.

    ``target_logprob_sum`` caches the target model's summed log
    probability of the tokens, so the candidate's perplexity never needs
    a re-query. Fresh extensions from :func:`expand` carry
    ``pending=True``: their sum still excludes the final token until
    :func:`select_topk` scores it.
    """

    tokens: TokenSeq
    target_logprob_sum: float
    complete: bool = False
    pending: bool = False

    @property
    def target_perplexity(self) -> float:
        if self.pending:
            raise InvalidInputError("candidate's last token has not been scored yet")
        if not self.tokens:
            return math.inf
        return perplexity_from_log_prob(self.target_logprob_sum, len(self.tokens))

    @property
    def sort_key(self) -> tuple[float, TokenSeq]:
        # Deterministic beam order: perplexity ascending, then token ids.
        return (self.target_perplexity, self.tokens)


Beam = list[Candidate]


def _top_tokens(lp: np.ndarray, width: int) -> list[int]:
    # Highest log prob first; ties go to the lowest token id (stable sort
    # over the negated vector). Zero-probability tokens are unselectable.
    order = np.argsort(-lp, kind="stable")[:width]
    return [int(t) for t in order if lp[t] != -math.inf]


def expand(beam: Beam, para: LanguageModel, ctx_prefix: Sequence[int], width: int) -> list[Candidate]:
    """One-token extensions of every unfinished candidate.

    Each incomplete candidate proposes the paraphrase model's top
    ``width`` tokens given prefix + candidate. An EOS proposal freezes
    the candidate instead of extending it. Complete candidates pass
    through unchanged; the result is deduplicated by token sequence.
    """
    if not beam:
        raise InvalidInputError("beam must be non-empty")
    if width < 1:
        raise InvalidInputError(f"width must be >= 1, got {width}")
    prefix = tuple(ctx_prefix)
    eos = para.vocabulary.eos_id
    out: list[Candidate] = []
    seen: set[TokenSeq] = set()

    def push(cand: Candidate) -> None:
        if cand.tokens not in seen:
            seen.add(cand.tokens)
            out.append(cand)

    for cand in beam:
        if cand.complete:
            push(cand)
            continue
        lp = para.next_log_probs(prefix + cand.tokens)
        for token in _top_tokens(lp, width):
            if token == eos:
                push(Candidate(cand.tokens, cand.target_logprob_sum, complete=True))
            else:
                push(Candidate(cand.tokens + (token,), cand.target_logprob_sum, pending=True))
    return out


def select_topk(cands: Sequence[Candidate], tar: LanguageModel, k: int) -> Beam:
    """Keep the ``k`` candidates with the lowest target perplexity.

    Pending extensions are scored incrementally: one target query per
    shared parent prefix adds the single new log probability to the
    cached sum. Ties break lexicographically on token ids; duplicates
    keep their best-ranked occurrence.
    """
    if not cands:
        raise InvalidInputError("candidate set must be non-empty")
    if k < 1:
        raise InvalidInputError(f"k must be >= 1, got {k}")
    by_parent: dict[TokenSeq, list[Candidate]] = {}
    scored: list[Candidate] = []
    for cand in cands:
        if cand.pending:
            by_parent.setdefault(cand.tokens[:-1], []).append(cand)
        else:
            scored.append(cand)
    for parent, group in by_parent.items():
        lp = tar.next_log_probs(parent)
        for cand in group:
            scored.append(
                Candidate(cand.tokens, cand.target_logprob_sum + float(lp[cand.tokens[-1]]), cand.complete)
            )
    scored.sort(key=lambda c: c.sort_key)
    beam: Beam = []
    seen: set[TokenSeq] = set()
    for cand in scored:
        if cand.tokens in seen:
            continue
        seen.add(cand.tokens)
        beam.append(cand)
        if len(beam) == k:
            break
    return beam


def _best(beam: Beam) -> Candidate:
    complete = [c for c in beam if c.complete]
    pool = complete if complete else beam
    return min(pool, key=lambda c: c.sort_key)


def _empty_search_result() -> GenerationResult:
    warnings.warn("search selected an empty rewrite (EOS came first)", EmptyGenerationWarning, stacklevel=3)
    return GenerationResult(
        tokens=(),
        text="",
        target_perplexity=math.nan,
        paraphrase_conditional_ppl=math.nan,
        finish_reason=FinishReason.EOS,
    )


def decode_search(
    para: LanguageModel,
    tar: LanguageModel,
    ori: Sequence[int],
    cfg: SearchConfig,
) -> GenerationResult:
    """Beam-search rewrite of ``ori`` under the target perplexity score.

    Iterates expand / select from the singleton empty beam until a beam
    member completes or ``max_len`` is reached, then returns the member
    with the lowest target perplexity, preferring complete ones.
    """
    ensure_shared_vocabulary(para, tar)
    ori = tuple(ori)
    if not ori:
        raise InvalidInputError("original prompt must be non-empty")
    prefix = cfg.system_prompt + ori
    beam: Beam = [Candidate(tokens=(), target_logprob_sum=0.0)]
    for _ in range(cfg.max_len):
        beam = select_topk(expand(beam, para, prefix, cfg.width), tar, cfg.k)
        if any(c.complete for c in beam):
            break
    best = _best(beam)
    if not best.tokens:
        return _empty_search_result()
    para_sum = sequence_log_prob(para, best.tokens, prefix)
    return GenerationResult(
        tokens=best.tokens,
        text=detokenize_with(para, best.tokens),
        target_perplexity=best.target_perplexity,
        paraphrase_conditional_ppl=perplexity_from_log_prob(para_sum, len(best.tokens)),
        finish_reason=FinishReason.EOS if best.complete else FinishReason.MAX_LEN,
    )


def results_identical(a: GenerationResult, b: GenerationResult) -> bool:
    """Exact equality of two results, treating NaN perplexities as equal."""

    def feq(x: float, y: float) -> bool:
        return x == y or (math.isnan(x) and math.isnan(y))

    return (
        a.tokens == b.tokens
        and a.text == b.text
        and a.finish_reason == b.finish_reason
        and feq(a.target_perplexity, b.target_perplexity)
        and feq(a.paraphrase_conditional_ppl, b.paraphrase_conditional_ppl)
    )


def brute_force_reference(
    para: LanguageModel,
    tar: LanguageModel,
    ori: Sequence[int],
    cfg: SearchConfig,
) -> GenerationResult:
    """Oracle re-derivation of :func:`decode_search` for tiny problems.

    Materializes the full expanded candidate set each step and rescores
    every candidate from scratch with :func:`sequence_log_prob` (no
    incremental sums, no shared beam helpers). Must produce a
    byte-identical result to :func:`decode_search` on all inputs inside
    the size caps; refuses anything larger.
    """
    vocab = para.vocabulary
    if vocab.size > ORACLE_MAX_VOCAB:
        raise OracleScaleError(f"oracle supports |V| <= {ORACLE_MAX_VOCAB}, got {vocab.size}")
    if cfg.max_len > ORACLE_MAX_LEN:
        raise OracleScaleError(f"oracle supports max_len <= {ORACLE_MAX_LEN}, got {cfg.max_len}")
    ensure_shared_vocabulary(para, tar)
    ori = tuple(ori)
    if not ori:
        raise InvalidInputError("original prompt must be non-empty")
    prefix = cfg.system_prompt + ori
    eos = vocab.eos_id

    def full_ppl(tokens: TokenSeq) -> float:
        if not tokens:
            return math.inf
        return perplexity_from_log_prob(sequence_log_prob(tar, tokens), len(tokens))

    beam: list[tuple[TokenSeq, bool]] = [((), False)]
    for _ in range(cfg.max_len):
        expanded: list[tuple[TokenSeq, bool]] = []
        for tokens, complete in beam:
            if complete:
                expanded.append((tokens, True))
                continue
            lp = para.next_log_probs(prefix + tokens)
            ranked = sorted(range(vocab.size), key=lambda t: (-lp[t], t))[: cfg.width]
            for token in ranked:
                if lp[token] == -math.inf:
                    continue
                if token == eos:
                    expanded.append((tokens, True))
                else:
                    expanded.append((tokens + (token,), False))
        expanded.sort(key=lambda tc: (full_ppl(tc[0]), tc[0]))
        beam = []
        seen: set[TokenSeq] = set()
        for tc in expanded:
            if tc[0] in seen:
                continue
            seen.add(tc[0])
            beam.append(tc)
            if len(beam) == cfg.k:
                break
        if any(complete for _, complete in beam):
            break

    complete_members = [tc for tc in beam if tc[1]]
    pool = complete_members if complete_members else beam
    tokens, complete = min(pool, key=lambda tc: (full_ppl(tc[0]), tc[0]))
    if not tokens:
        return _empty_search_result()
    return GenerationResult(
        tokens=tokens,
        text=detokenize_with(para, tokens),
        target_perplexity=full_ppl(tokens),
        paraphrase_conditional_ppl=perplexity_from_log_prob(
            sequence_log_prob(para, tokens, prefix), len(tokens)
        ),
        finish_reason=FinishReason.EOS if complete else FinishReason.MAX_LEN,
    )
