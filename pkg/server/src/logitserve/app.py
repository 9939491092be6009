"""FastAPI application serving the token-logprob wire protocol.

Endpoints (JSON over HTTP, UTF-8):

* ``GET /v1/vocab`` — vocabulary snapshot: size, EOS id, BOS id (or
  null), SHA-256 hash of the newline-joined token strings, and the
  token strings themselves. Stable for the process lifetime.
* ``POST /v1/logprobs`` — body ``{"tokens": [int, ...]}``; answers the
  log-softmax of the final-position logits given exactly that context.
  The server never prepends BOS or anything else: context handling is
  the client's job.
* ``POST /v1/tokenize`` / ``POST /v1/detokenize`` — text to ids and back,
  no special tokens added.

Malformed bodies answer 400 with ``{"error": ...}``; model failures
answer 500. Inference is deterministic: eval mode, no sampling, log
probabilities computed in float64.
"""

from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass

import torch
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel
from transformers import AutoModelForCausalLM, AutoTokenizer

_DTYPES = {"float32": torch.float32, "float64": torch.float64}


@dataclass
class ServerConfig:
    """Process configuration; see the CLI for flag/env-var names."""

    model: str
    host: str = "127.0.0.1"
    port: int = 8731
    max_concurrency: int = 16
    precision: str = "float32"

    def __post_init__(self) -> None:
        if self.precision not in _DTYPES:
            raise ValueError(f"precision must be one of {sorted(_DTYPES)}, got {self.precision!r}")


class ModelBackend:
    """A loaded causal LM plus its tokenizer, behind a serialization lock."""

    def __init__(self, model_path: str, precision: str = "float32") -> None:
        self.tokenizer = AutoTokenizer.from_pretrained(model_path)
        self.model = AutoModelForCausalLM.from_pretrained(model_path, dtype=_DTYPES[precision])
        self.model.eval()
        if self.tokenizer.eos_token_id is None:
            raise ValueError("the served model must define an EOS token")
        self.vocab_size = int(self.model.config.vocab_size)
        self.max_context = int(getattr(self.model.config, "n_positions", 0) or getattr(self.model.config, "max_position_embeddings", 4096))
        tokens = []
        for i in range(self.vocab_size):
            tok = self.tokenizer.convert_ids_to_tokens(i)
            tokens.append(tok if tok is not None else f"<unused_{i}>")
        self.tokens = tokens
        self.eos_id = int(self.tokenizer.eos_token_id)
        bos = self.tokenizer.bos_token_id
        self.bos_id = None if bos is None else int(bos)
        self.vocab_hash = hashlib.sha256("\n".join(tokens).encode("utf-8")).hexdigest()
        self._lock = threading.Lock()

    def log_probs(self, ids: list[int]) -> list[float]:
        with self._lock, torch.no_grad():
            logits = self.model(torch.tensor([ids], dtype=torch.long)).logits[0, -1]
            return torch.log_softmax(logits.double(), dim=-1).tolist()

    def tokenize(self, text: str) -> list[int]:
        return [int(t) for t in self.tokenizer.encode(text, add_special_tokens=False)]

    def detokenize(self, ids: list[int]) -> str:
        return self.tokenizer.decode(ids, skip_special_tokens=False)


class TokensBody(BaseModel):
    tokens: list[int]


class TextBody(BaseModel):
    text: str


def _bad_request(message: str) -> JSONResponse:
    return JSONResponse(status_code=400, content={"error": message})


def create_app(backend: ModelBackend) -> FastAPI:
    app = FastAPI(title="logitserve", docs_url=None, redoc_url=None)

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request, exc: RequestValidationError):
        return _bad_request(f"malformed body: {exc.errors()[0].get('msg', 'invalid')}")

    @app.exception_handler(Exception)
    async def on_failure(request: Request, exc: Exception):
        return JSONResponse(status_code=500, content={"error": f"model failure: {exc}"})

    @app.get("/v1/vocab")
    def vocab():
        return {
            "vocab_size": backend.vocab_size,
            "eos_id": backend.eos_id,
            "bos_id": backend.bos_id,
            "vocab_hash": backend.vocab_hash,
            "tokens": backend.tokens,
        }

    @app.post("/v1/logprobs")
    def logprobs(body: TokensBody):
        if not body.tokens:
            return _bad_request("empty context: supply at least one token (a BOS id, typically)")
        if len(body.tokens) > backend.max_context:
            return _bad_request(f"context of {len(body.tokens)} tokens exceeds the model maximum {backend.max_context}")
        for t in body.tokens:
            if not 0 <= t < backend.vocab_size:
                return _bad_request(f"token id {t} out of range for vocab_size {backend.vocab_size}")
        return {"log_probs": backend.log_probs(body.tokens)}

    @app.post("/v1/tokenize")
    def tokenize(body: TextBody):
        return {"tokens": backend.tokenize(body.text)}

    @app.post("/v1/detokenize")
    def detokenize(body: TokensBody):
        for t in body.tokens:
            if not 0 <= t < backend.vocab_size:
                return _bad_request(f"token id {t} out of range for vocab_size {backend.vocab_size}")
        return {"text": backend.detokenize(body.tokens)}

    return app


def serve(cfg: ServerConfig) -> None:
    """Load the model and block serving requests."""
    import uvicorn

    backend = ModelBackend(cfg.model, precision=cfg.precision)
    app = create_app(backend)
    uvicorn.run(app, host=cfg.host, port=cfg.port, limit_concurrency=cfg.max_concurrency, log_level="info")
