"""HTTP server exposing a causal LM's next-token log probabilities."""

from .app import ModelBackend, ServerConfig, create_app

__all__ = ["ModelBackend", "ServerConfig", "create_app"]
