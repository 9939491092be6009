"""Command-line entry point tying decoders, models, and evaluation together.

Every subcommand is a reproducible batch run: the same flags and input
files produce byte-identical output files.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass

import numpy as np

from .core import LanguageModel, TextCodec
from .ensemble import DEFAULT_SYSTEM_PROMPT, EnsembleConfig, decode_ensemble, decode_greedy
from .errors import (
    DecodingStuckError,
    InvalidInputError,
    ModelUnavailableError,
    ProtocolViolationError,
    VocabMismatchError,
)
from .evalharness import (
    PromptTemplate,
    ReportRow,
    evaluate,
    read_dataset,
    read_prompts,
    read_templates,
    scatter_export,
    scatter_rank_correlation,
    sweep_alpha,
    write_report_csv,
    write_scatter_csv,
    write_sweep_csv,
)
from .remote import connect
from .search import SearchConfig, brute_force_reference, decode_search, results_identical
from .toy import load_corpus, load_table_lm, random_table_lm, train_ngram

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_VOCAB = 4
EXIT_PROTOCOL = 5
EXIT_UNAVAILABLE = 6
EXIT_STUCK = 7

_EPILOG = """\
exit codes:
  0  success
  2  usage error (unknown flag or invalid flag combination)
  3  unreadable or invalid input data
  4  vocabulary mismatch between the bound models
  5  wire-protocol violation from a remote server
  6  remote model unavailable
  7  decoding stuck (every candidate token has probability zero)

model bindings (--para-model / --tar-model):
  fixture:<path>                   JSON table-model fixture
  ngram:<corpus>:<order>:<alpha>   n-gram model trained on a text corpus
  http://host:port                 remote wire-protocol server
Giving only --para-model binds the same model to both roles.
"""


class _UsageError(Exception):
    pass


@dataclass
class RunConfig:
    """Validated decoding parameters of one CLI run."""

    mode: str
    alpha: float | None = None
    k: int | None = None
    expand_width: int | None = None
    max_len: int = 32
    system_prompt_text: str = DEFAULT_SYSTEM_PROMPT
    seed: int = 0

    def validate(self) -> None:
        if self.mode == "ensemble":
            if self.alpha is None:
                raise _UsageError("--alpha is required with --mode ensemble")
            if not 0.0 <= self.alpha <= 1.0:
                raise _UsageError("--alpha must be in [0, 1]")
        elif self.alpha is not None:
            raise _UsageError(f"--alpha does not apply to --mode {self.mode}")
        if self.mode == "search":
            if self.k is None:
                raise _UsageError("--k is required with --mode search")
            if self.k < 1 or (self.expand_width is not None and self.expand_width < 1):
                raise _UsageError("--k and --expand-width must be >= 1")
        else:
            if self.k is not None or self.expand_width is not None:
                raise _UsageError(f"--k/--expand-width do not apply to --mode {self.mode}")
        if self.max_len < 1:
            raise _UsageError("--max-len must be >= 1")


def _bind_model(value: str) -> LanguageModel:
    if value.startswith("fixture:"):
        return load_table_lm(value[len("fixture:") :])
    if value.startswith("ngram:"):
        head, order, alpha = value.rsplit(":", 2)
        try:
            return train_ngram(load_corpus(head[len("ngram:") :]), int(order), float(alpha))
        except ValueError as exc:
            raise InvalidInputError(f"bad ngram binding {value!r}: {exc}") from None
    if value.startswith(("http://", "https://")):
        return connect(value)
    raise InvalidInputError(
        f"unrecognized model binding {value!r}; expected fixture:<path>, ngram:<corpus>:<order>:<alpha>, or http(s)://..."
    )


def _bind_pair(args) -> tuple[LanguageModel, LanguageModel]:
    para_binding = args.para_model or args.tar_model
    tar_binding = args.tar_model or args.para_model
    if para_binding is None:
        raise _UsageError("at least one of --para-model/--tar-model is required")
    para = _bind_model(para_binding)
    tar = para if tar_binding == para_binding else _bind_model(tar_binding)
    return para, tar


def _system_tokens(para: LanguageModel, text: str) -> tuple[int, ...]:
    if not text:
        return ()
    if not isinstance(para, TextCodec):
        raise InvalidInputError("the paraphrase model has no tokenizer for the system prompt")
    return tuple(para.tokenize(text))


def _decode(cfg: RunConfig, para: LanguageModel, tar: LanguageModel, ori):
    system = _system_tokens(para, cfg.system_prompt_text)
    if cfg.mode == "greedy":
        return decode_greedy(para, tar, ori, EnsembleConfig(max_len=cfg.max_len, system_prompt=system))
    if cfg.mode == "ensemble":
        return decode_ensemble(
            para, tar, ori, EnsembleConfig(alpha=cfg.alpha, max_len=cfg.max_len, system_prompt=system)
        )
    if cfg.mode == "search":
        return decode_search(
            para,
            tar,
            ori,
            SearchConfig(k=cfg.k, expand_width=cfg.expand_width, max_len=cfg.max_len, system_prompt=system),
        )
    raise _UsageError(f"unknown mode {cfg.mode!r}")


def _run_config(args, mode: str | None = None) -> RunConfig:
    cfg = RunConfig(
        mode=mode if mode is not None else args.mode,
        alpha=args.alpha,
        k=args.k,
        expand_width=args.expand_width,
        max_len=args.max_len,
        system_prompt_text=args.system_prompt,
        seed=args.seed,
    )
    cfg.validate()
    return cfg


def _cmd_paraphrase(args) -> int:
    cfg = _run_config(args)
    para, tar = _bind_pair(args)
    prompts = read_prompts(args.input)
    rows = []
    for i, text in enumerate(prompts):
        ori = para.tokenize(text) if isinstance(para, TextCodec) else []
        if not ori:
            print(f"warning: prompt {i} has no representable tokens, skipped", file=sys.stderr)
            continue
        result = _decode(cfg, para, tar, ori)
        if result.is_empty:
            print(f"warning: prompt {i} produced an empty rewrite", file=sys.stderr)
        rows.append(
            {
                "original": text,
                "paraphrase": result.text,
                "target_ppl": result.target_perplexity,
                "finish_reason": result.finish_reason.value,
            }
        )
    with open(args.output, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    return EXIT_OK


def _cmd_eval(args) -> int:
    mode = args.mode
    cfg = _run_config(args)  # rejects decode flags that do not fit the mode
    para, tar = _bind_pair(args)
    templates = read_templates(args.templates)
    dataset = read_dataset(args.dataset)
    rows = []
    for idx, tmpl in enumerate(templates):
        prompt_text = tmpl.prompt_text
        if mode != "none":
            ori = para.tokenize(tmpl.prompt_text) if isinstance(para, TextCodec) else []
            if not ori:
                raise InvalidInputError(f"template {idx} has no representable tokens")
            result = _decode(cfg, para, tar, ori)
            if result.is_empty:
                print(f"warning: template {idx} rewrote to an empty prompt", file=sys.stderr)
            prompt_text = result.text
        report = evaluate(tar, PromptTemplate(prompt_text, tmpl.label_choices), dataset, workers=args.workers)
        for note in report.warnings:
            print(f"warning: template {idx}: {note}", file=sys.stderr)
        rows.append(
            ReportRow(
                template_id=idx,
                alpha=args.alpha if mode == "ensemble" else None,
                mode=mode,
                accuracy=report.accuracy,
                avg_ppl=report.avg_perplexity,
                n=report.n,
            )
        )
    with open(args.output, "w", encoding="utf-8") as fh:
        write_report_csv(fh, rows)
    return EXIT_OK


def _cmd_sweep_alpha(args) -> int:
    try:
        alphas = [float(a) for a in args.alphas.split(",") if a.strip() != ""]
    except ValueError:
        raise _UsageError(f"--alphas must be a comma-separated list of floats, got {args.alphas!r}")
    if not alphas:
        raise _UsageError("--alphas must name at least one coefficient")
    if any(not 0.0 <= a <= 1.0 for a in alphas):
        raise _UsageError("every alpha must be in [0, 1]")
    para, tar = _bind_pair(args)
    if not isinstance(para, TextCodec):
        raise InvalidInputError("sweep-alpha needs a paraphrase model with a tokenizer")
    ori = para.tokenize(args.prompt)
    if not ori:
        raise InvalidInputError("the prompt has no representable tokens")
    cfg = EnsembleConfig(max_len=args.max_len, system_prompt=_system_tokens(para, args.system_prompt))
    rows = sweep_alpha(para, tar, ori, alphas, cfg)
    for row in rows:
        if not row.text:
            print(f"warning: alpha={row.alpha:g} produced an empty rewrite", file=sys.stderr)
    with open(args.output, "w", encoding="utf-8") as fh:
        write_sweep_csv(fh, rows)
    return EXIT_OK


def _cmd_scatter(args) -> int:
    para, tar = _bind_pair(args)
    prompts = read_prompts(args.input)
    cfg = EnsembleConfig(max_len=args.max_len, system_prompt=_system_tokens(para, args.system_prompt))
    rows, skipped = scatter_export(para, tar, prompts, cfg)
    for note in skipped:
        print(f"warning: {note}", file=sys.stderr)
    with open(args.output, "w", encoding="utf-8") as fh:
        write_scatter_csv(fh, rows)
    rho = scatter_rank_correlation(rows)
    print(f"rows={len(rows)} spearman_rank_correlation={rho:.6g}")
    return EXIT_OK


def _cmd_oracle_check(args) -> int:
    try:
        k_values = [int(k) for k in args.k_values.split(",")]
    except ValueError:
        raise _UsageError(f"--k-values must be a comma-separated list of ints, got {args.k_values!r}")
    mismatches = 0
    runs = 0
    for i in range(args.pairs):
        para = random_table_lm(args.seed + 2 * i, args.vocab_size, order=1)
        tar = random_table_lm(args.seed + 2 * i + 1, args.vocab_size, order=1)
        rng = np.random.default_rng(args.seed + 100_000 + i)
        ori = tuple(int(t) for t in rng.integers(0, args.vocab_size - 1, size=3))
        for k in k_values:
            cfg = SearchConfig(k=k, expand_width=k, max_len=args.max_len, system_prompt=())
            fast = decode_search(para, tar, ori, cfg)
            slow = brute_force_reference(para, tar, ori, cfg)
            runs += 1
            if not results_identical(fast, slow):
                mismatches += 1
                print(f"mismatch: pair={i} k={k} fast={fast.tokens} slow={slow.tokens}", file=sys.stderr)
    print(f"{mismatches} mismatches over {runs} runs")
    return EXIT_OK if mismatches == 0 else 1


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--para-model", help="paraphrase-role model binding")
    p.add_argument("--tar-model", help="target-role model binding (defaults to --para-model)")


def _add_decode_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--alpha", type=float, default=None, help="ensemble weight on the target model")
    p.add_argument("--k", type=int, default=None, help="search beam size")
    p.add_argument("--expand-width", type=int, default=None, help="search proposals per candidate (default: k)")
    p.add_argument("--max-len", type=int, default=32, help="maximum generated tokens")
    p.add_argument("--system-prompt", default=DEFAULT_SYSTEM_PROMPT, help="instruction text for the paraphrase model")
    p.add_argument("--seed", type=int, default=0, help="base seed for generated fixtures")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="paralow",
        description="Rewrite prompts into lower-perplexity paraphrases and evaluate them.",
        epilog=_EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("paraphrase", help="decode a prompts file into a rewrites file")
    p.add_argument("--mode", choices=["greedy", "ensemble", "search"], required=True)
    _add_model_flags(p)
    _add_decode_flags(p)
    p.add_argument("--input", required=True, help="prompts file, one per line")
    p.add_argument("--output", required=True, help="JSON-lines results file")
    p.set_defaults(func=_cmd_paraphrase)

    p = sub.add_parser("eval", help="accuracy and prompt perplexity over a labeled dataset")
    p.add_argument("--mode", choices=["none", "greedy", "ensemble", "search"], default="none")
    _add_model_flags(p)
    _add_decode_flags(p)
    p.add_argument("--templates", required=True, help="JSON-lines template file")
    p.add_argument("--dataset", required=True, help="JSON-lines dataset file")
    p.add_argument("--workers", type=int, default=1, help="parallel evaluation workers")
    p.add_argument("--output", required=True, help="report CSV")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("sweep-alpha", help="decode one prompt at several ensemble coefficients")
    _add_model_flags(p)
    p.add_argument("--alphas", required=True, help="comma-separated coefficients, e.g. 0.2,0.5,0.7")
    p.add_argument("--prompt", required=True, help="original prompt text")
    p.add_argument("--max-len", type=int, default=32)
    p.add_argument("--system-prompt", default=DEFAULT_SYSTEM_PROMPT)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True, help="sweep CSV")
    p.set_defaults(func=_cmd_sweep_alpha)

    p = sub.add_parser("scatter", help="rewrite prompts greedily and export both perplexities")
    _add_model_flags(p)
    p.add_argument("--input", required=True, help="prompts file, one per line")
    p.add_argument("--max-len", type=int, default=32)
    p.add_argument("--system-prompt", default=DEFAULT_SYSTEM_PROMPT)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True, help="scatter CSV")
    p.set_defaults(func=_cmd_scatter)

    p = sub.add_parser("oracle-check", help="compare search decoding against its brute-force oracle")
    p.add_argument("--pairs", type=int, default=100)
    p.add_argument("--vocab-size", type=int, default=5)
    p.add_argument("--k-values", default="1,2,3")
    p.add_argument("--max-len", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_oracle_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InvalidInputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except VocabMismatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VOCAB
    except ProtocolViolationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except ModelUnavailableError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNAVAILABLE
    except DecodingStuckError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STUCK


if __name__ == "__main__":
    sys.exit(main())
