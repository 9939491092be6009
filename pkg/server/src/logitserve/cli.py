"""Command-line launcher; every flag falls back to a LOGITSERVE_* env var."""

from __future__ import annotations

import argparse
import os
import sys

from .app import ServerConfig, serve


def build_parser() -> argparse.ArgumentParser:
    env = os.environ
    parser = argparse.ArgumentParser(
        prog="logitserve",
        description="Serve a causal LM's next-token log probabilities over HTTP.",
    )
    parser.add_argument(
        "--model",
        default=env.get("LOGITSERVE_MODEL"),
        help="model identifier or local checkpoint path (env LOGITSERVE_MODEL)",
    )
    parser.add_argument("--host", default=env.get("LOGITSERVE_HOST", "127.0.0.1"))
    parser.add_argument("--port", type=int, default=int(env.get("LOGITSERVE_PORT", "8731")))
    parser.add_argument(
        "--max-concurrency",
        type=int,
        default=int(env.get("LOGITSERVE_MAX_CONCURRENCY", "16")),
        help="cap on concurrent in-flight requests",
    )
    parser.add_argument(
        "--precision",
        choices=["float32", "float64"],
        default=env.get("LOGITSERVE_PRECISION", "float32"),
        help="model weight precision; log probabilities are always float64",
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if not args.model:
        print("error: --model (or LOGITSERVE_MODEL) is required", file=sys.stderr)
        return 2
    cfg = ServerConfig(
        model=args.model,
        host=args.host,
        port=args.port,
        max_concurrency=args.max_concurrency,
        precision=args.precision,
    )
    serve(cfg)
    return 0


if __name__ == "__main__":
    sys.exit(main())
