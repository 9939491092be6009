"""Prompt-quality metrics: instantiated-prompt perplexity, label-ranking
accuracy, coefficient sweeps, and paraphrase-vs-prompt perplexity export.

A task template is instantiated per dataset example as
``input  <newline>  prompt  <newline>  "Choices: a, b. Answer: "`` and
scored by the model that will execute it. Classification picks the label
whose token sequence has the highest mean per-token log probability as a
continuation of the instantiated prompt (mean, not sum, so longer labels
are not penalized; ties go to the lowest label index).

Models used here must expose the text surface (tokenize / detokenize) in
addition to next-token queries. Instance order is always preserved, and
parallel evaluation reduces in input order, so reports are reproducible
byte for byte.
"""

from __future__ import annotations

import csv
import json
import math
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence, TextIO

import numpy as np
from scipy.stats import spearmanr

from .core import LanguageModel, TextCodec, detokenize_with, ensure_shared_vocabulary, perplexity
from .ensemble import EnsembleConfig, decode_ensemble, decode_greedy
from .errors import InvalidInputError

#: Hook for a semantic-similarity scorer (reference text, candidate text)
#: -> [0, 1]. None means the similarity column stays empty.
SimilarityFn = Callable[[str, str], float]

_UNK_STRINGS = ("<unk>", "unk")


@dataclass(frozen=True)
class PromptTemplate:
    """Task prompt plus its answer choices."""

    prompt_text: str
    label_choices: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "label_choices", tuple(self.label_choices))
        if len(self.label_choices) < 2:
            raise InvalidInputError("a template needs at least two label choices")
        if any(not c for c in self.label_choices):
            raise InvalidInputError("label choices must be non-empty strings")

    @property
    def choices_suffix(self) -> str:
        return "Choices: " + ", ".join(self.label_choices) + ". Answer: "


@dataclass(frozen=True)
class LabeledExample:
    input_text: str
    gold_label: str


@dataclass(frozen=True)
class InstanceResult:
    index: int
    gold_label: str
    predicted_label: str
    prompt_perplexity: float
    correct: bool


@dataclass
class EvalReport:
    """Aggregate metrics over one template and dataset."""

    avg_perplexity: float
    accuracy: float
    per_instance: list[InstanceResult]
    n: int
    warnings: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class ScatterRow:
    """One paraphrase scored both ways.

    ``ppl_as_output``: conditional perplexity under the paraphrase model
    given instruction + original. ``ppl_as_input``: standalone perplexity
    under the target model.
    """

    paraphrase_text: str
    ppl_as_output: float
    ppl_as_input: float


@dataclass(frozen=True)
class SweepRow:
    alpha: float
    text: str
    target_perplexity: float
    similarity: float | None = None


def instantiate_prompt(tmpl: PromptTemplate, ex: LabeledExample) -> str:
    """Render one evaluation prompt: input, task prompt, choices suffix."""
    if not ex.input_text:
        raise InvalidInputError("example input_text must be non-empty")
    return f"{ex.input_text}\n{tmpl.prompt_text}\n{tmpl.choices_suffix}"


def _require_codec(model: LanguageModel) -> None:
    if not isinstance(model, TextCodec):
        raise InvalidInputError("evaluation requires a model with a text surface (tokenize/detokenize)")


def _unk_id(model: LanguageModel) -> int | None:
    for i, tok in enumerate(model.vocabulary.tokens):
        if tok in _UNK_STRINGS:
            return i
    return None


def _instance_metrics(
    model: LanguageModel,
    tmpl: PromptTemplate,
    label_ids: list[list[int]],
    ex: LabeledExample,
    index: int,
    unk: int | None,
) -> tuple[InstanceResult, str | None]:
    text = instantiate_prompt(tmpl, ex)
    ids = model.tokenize(text)
    if not ids:
        raise InvalidInputError(f"instance {index} tokenized to nothing; vocabulary cannot represent it")
    warning = None
    if unk is not None:
        unk_rate = sum(1 for t in ids if t == unk) / len(ids)
        if unk_rate > 0.5:
            warning = f"instance {index}: {unk_rate:.0%} of tokens are unknown to the model"
    ppl = perplexity(model, ids)
    pred = classify(model, ids, label_ids)
    predicted = tmpl.label_choices[pred]
    return (
        InstanceResult(
            index=index,
            gold_label=ex.gold_label,
            predicted_label=predicted,
            prompt_perplexity=ppl,
            correct=predicted == ex.gold_label,
        ),
        warning,
    )


def label_scores(model: LanguageModel, prompt_tokens: Sequence[int], labels: Sequence[Sequence[int]]) -> list[float]:
    """Mean per-token log probability of each label continued after the prompt."""
    scores = []
    for label in labels:
        label = tuple(label)
        if not label:
            raise InvalidInputError("every label must tokenize to at least one token")
        ctx = tuple(prompt_tokens)
        total = 0.0
        for tok in label:
            total += float(model.next_log_probs(ctx)[tok])
            ctx += (tok,)
        scores.append(total / len(label))
    return scores


def classify(model: LanguageModel, prompt_tokens: Sequence[int], labels: Sequence[Sequence[int]]) -> int:
    """Index of the label scoring highest as a continuation of the prompt.

    Score = mean per-token log probability of the label's tokens after
    ``prompt_tokens``. Ties resolve to the lowest index.
    """
    if len(labels) < 2:
        raise InvalidInputError("classify needs at least two labels")
    return int(np.argmax(label_scores(model, prompt_tokens, labels)))


def avg_prompt_perplexity(model: LanguageModel, tmpl: PromptTemplate, examples: Sequence[LabeledExample]) -> float:
    """Arithmetic mean of instantiated-prompt perplexities."""
    if not examples:
        raise InvalidInputError("need at least one example")
    _require_codec(model)
    ppls = [perplexity(model, model.tokenize(instantiate_prompt(tmpl, ex))) for ex in examples]
    return statistics.mean(ppls)


def evaluate(
    model: LanguageModel,
    tmpl: PromptTemplate,
    dataset: Sequence[LabeledExample],
    workers: int = 1,
) -> EvalReport:
    """Accuracy and average prompt perplexity over a labeled dataset.

    Deterministic for a fixed dataset order; with ``workers > 1``
    instances are scored concurrently but reduced in input order, so the
    report is identical to a sequential run.
    """
    dataset = list(dataset)
    if not dataset:
        raise InvalidInputError("dataset must be non-empty")
    _require_codec(model)
    for ex in dataset:
        if ex.gold_label not in tmpl.label_choices:
            raise InvalidInputError(f"gold label {ex.gold_label!r} is not one of the declared choices")
    label_ids = [model.tokenize(c) for c in tmpl.label_choices]
    unk = _unk_id(model)

    def one(pair: tuple[int, LabeledExample]) -> tuple[InstanceResult, str | None]:
        index, ex = pair
        return _instance_metrics(model, tmpl, label_ids, ex, index, unk)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(one, enumerate(dataset)))
    else:
        outcomes = [one(pair) for pair in enumerate(dataset)]

    rows = [res for res, _ in outcomes]
    warnings = [w for _, w in outcomes if w is not None]
    correct = sum(1 for r in rows if r.correct)
    return EvalReport(
        avg_perplexity=statistics.mean(r.prompt_perplexity for r in rows),
        accuracy=correct / len(rows),
        per_instance=rows,
        n=len(rows),
        warnings=warnings,
    )


def scatter_export(
    para: LanguageModel,
    tar: LanguageModel,
    ori_prompts: Sequence[str],
    cfg: EnsembleConfig,
) -> tuple[list[ScatterRow], list[str]]:
    """Greedy-rewrite each prompt and score it both ways.

    Returns the rows plus warnings for prompts that were skipped (no
    representable tokens, or an empty rewrite).
    """
    ensure_shared_vocabulary(para, tar)
    _require_codec(para)
    rows: list[ScatterRow] = []
    skipped: list[str] = []
    for i, text in enumerate(ori_prompts):
        ori = para.tokenize(text)
        if not ori:
            skipped.append(f"prompt {i}: no representable tokens, skipped")
            continue
        result = decode_greedy(para, tar, ori, cfg)
        if result.is_empty:
            skipped.append(f"prompt {i}: empty rewrite, skipped")
            continue
        rows.append(
            ScatterRow(
                paraphrase_text=result.text,
                ppl_as_output=result.paraphrase_conditional_ppl,
                ppl_as_input=result.target_perplexity,
            )
        )
    return rows, skipped


def scatter_rank_correlation(rows: Sequence[ScatterRow]) -> float:
    """Spearman rank correlation between the two perplexity columns."""
    if len(rows) < 2:
        return math.nan
    rho = spearmanr([r.ppl_as_output for r in rows], [r.ppl_as_input for r in rows]).statistic
    return float(rho)


def sweep_alpha(
    para: LanguageModel,
    tar: LanguageModel,
    ori: Sequence[int],
    alphas: Sequence[float],
    cfg: EnsembleConfig,
    similarity: SimilarityFn | None = None,
) -> list[SweepRow]:
    """Ensemble-decode ``ori`` once per coefficient and report each rewrite."""
    rows = []
    reference = detokenize_with(para, ori)
    for alpha in alphas:
        result = decode_ensemble(para, tar, ori, replace(cfg, alpha=alpha))
        score = similarity(reference, result.text) if similarity is not None else None
        rows.append(SweepRow(alpha=alpha, text=result.text, target_perplexity=result.target_perplexity, similarity=score))
    return rows


# ---------------------------------------------------------------------------
# File formats: JSON-lines in, CSV out. Floats use 6 significant digits.


def _fmt(x: float | None) -> str:
    if x is None:
        return ""
    return f"{x:.6g}"


@dataclass(frozen=True)
class ReportRow:
    """One line of the evaluation report CSV."""

    template_id: int
    alpha: float | None
    mode: str
    accuracy: float
    avg_ppl: float
    n: int


def write_report_csv(fh: TextIO, rows: Sequence[ReportRow]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["template_id", "alpha", "mode", "accuracy", "avg_ppl", "n"])
    for r in rows:
        writer.writerow([r.template_id, _fmt(r.alpha), r.mode, _fmt(r.accuracy), _fmt(r.avg_ppl), r.n])


def write_scatter_csv(fh: TextIO, rows: Sequence[ScatterRow]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["prompt_id", "ppl_as_output", "ppl_as_input"])
    for i, r in enumerate(rows):
        writer.writerow([i, _fmt(r.ppl_as_output), _fmt(r.ppl_as_input)])


def write_sweep_csv(fh: TextIO, rows: Sequence[SweepRow]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["alpha", "text", "target_ppl", "similarity"])
    for r in rows:
        writer.writerow([_fmt(r.alpha), r.text, _fmt(r.target_perplexity), _fmt(r.similarity)])


def read_dataset(path: str | Path) -> list[LabeledExample]:
    """JSON-lines dataset: one ``{"input": ..., "label": ...}`` per line."""
    out = []
    for lineno, obj in _read_jsonl(path):
        try:
            out.append(LabeledExample(input_text=str(obj["input"]), gold_label=str(obj["label"])))
        except KeyError as exc:
            raise InvalidInputError(f"{path}:{lineno}: missing key {exc.args[0]!r}") from None
    return out


def read_templates(path: str | Path) -> list[PromptTemplate]:
    """JSON-lines templates: one ``{"prompt": ..., "choices": [...]}`` per line."""
    out = []
    for lineno, obj in _read_jsonl(path):
        try:
            out.append(PromptTemplate(prompt_text=str(obj["prompt"]), label_choices=tuple(obj["choices"])))
        except KeyError as exc:
            raise InvalidInputError(f"{path}:{lineno}: missing key {exc.args[0]!r}") from None
    return out


def read_prompts(path: str | Path) -> list[str]:
    """Plain-text prompts, one per line; blank lines are dropped."""
    with open(path, "r", encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh if line.strip()]


def _read_jsonl(path: str | Path):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise InvalidInputError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
