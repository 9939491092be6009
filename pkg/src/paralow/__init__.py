"""Prompt rewriting by perplexity-constrained decoding over pluggable models."""

from .core import (
    FinishReason,
    GenerationResult,
    LanguageModel,
    ModelRole,
    TextCodec,
    TokenSeq,
    Vocabulary,
    perplexity,
    sequence_log_prob,
)
from .ensemble import (
    DEFAULT_SYSTEM_PROMPT,
    EnsembleConfig,
    combined_score,
    decode_ensemble,
    decode_greedy,
)
from .errors import (
    DecodingStuckError,
    InvalidInputError,
    ModelUnavailableError,
    OracleScaleError,
    ParalowError,
    ProtocolViolationError,
    VocabMismatchError,
)
from .remote import RemoteModel, connect
from .search import Candidate, SearchConfig, brute_force_reference, decode_search
from .toy import NGramLM, TableLM, WhitespaceTokenizer, random_table_lm, table_lm_from_fixture, train_ngram

__all__ = [
    "Candidate",
    "DEFAULT_SYSTEM_PROMPT",
    "DecodingStuckError",
    "EnsembleConfig",
    "FinishReason",
    "GenerationResult",
    "InvalidInputError",
    "LanguageModel",
    "ModelRole",
    "ModelUnavailableError",
    "NGramLM",
    "OracleScaleError",
    "ParalowError",
    "ProtocolViolationError",
    "RemoteModel",
    "SearchConfig",
    "TableLM",
    "TextCodec",
    "TokenSeq",
    "Vocabulary",
    "VocabMismatchError",
    "WhitespaceTokenizer",
    "brute_force_reference",
    "combined_score",
    "connect",
    "decode_ensemble",
    "decode_greedy",
    "decode_search",
    "perplexity",
    "random_table_lm",
    "sequence_log_prob",
    "table_lm_from_fixture",
    "train_ngram",
]
