"""Text-to-vector embedding backends.

Two backends share one contract: an OpenAI-compatible HTTP endpoint for real
models, and a deterministic hashed bag-of-words embedder for fully offline
runs and tests. Both are order-preserving and deterministic for a fixed
configuration.
"""

from __future__ import annotations

import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np

from ._http import auth_headers, post_json
from .errors import ConfigurationError, IntegrityError, ValidationError


class BackendKind(str, Enum):
    HTTP_ENDPOINT = "http_endpoint"
    DETERMINISTIC_MOCK = "deterministic_mock"


@dataclass(eq=False)
class EmbeddingVector:
    """Fixed-dimension real vector plus the model that produced it."""

    values: np.ndarray
    dim: int
    model_id: str

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1 or self.values.shape[0] != self.dim:
            raise IntegrityError(
                f"vector has {self.values.shape} values, expected ({self.dim},)"
            )
        if not np.all(np.isfinite(self.values)):
            raise IntegrityError("vector contains non-finite values")


@dataclass(frozen=True)
class EmbeddingBackendConfig:
    kind: BackendKind
    model_id: str
    dim: int = 384
    endpoint_url: str | None = None
    timeout: float = 30.0
    api_key_env_var: str | None = None
    mock_seed: int = 0
    batch_size: int = 32
    max_in_flight: int = 4
    max_retries: int = 2
    retry_backoff: float = 0.5

    def validate(self) -> None:
        if self.dim <= 0:
            raise ConfigurationError(f"embedding dim must be positive, got {self.dim}")
        if self.kind == BackendKind.HTTP_ENDPOINT and not self.endpoint_url:
            raise ConfigurationError("http_endpoint embedding backend requires endpoint_url")
        if self.batch_size < 1 or self.max_in_flight < 1:
            raise ConfigurationError("batch_size and max_in_flight must be >= 1")


# ---------------------------------------------------------------------------
# Deterministic mock: hashed bag of words
# ---------------------------------------------------------------------------

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF

_TOKEN_RE = re.compile(r"[a-z0-9]+")

_MOCK_MODEL_RE = re.compile(r"^hash-bow-fnv1a-d(\d+)-s(\d+)$")


def mock_model_id(dim: int, seed: int) -> str:
    return f"hash-bow-fnv1a-d{dim}-s{seed}"


def parse_mock_model_id(model_id: str) -> tuple[int, int] | None:
    """Recover (dim, seed) from a mock model id, or None if it is not one."""
    m = _MOCK_MODEL_RE.match(model_id)
    if m is None:
        return None
    return int(m.group(1)), int(m.group(2))


def mock_config(dim: int = 384, seed: int = 0) -> EmbeddingBackendConfig:
    """Config for the offline deterministic embedder."""
    return EmbeddingBackendConfig(
        kind=BackendKind.DETERMINISTIC_MOCK,
        model_id=mock_model_id(dim, seed),
        dim=dim,
        mock_seed=seed,
    )


def _fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a. Fixed published constants keep results portable."""
    h = _FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME) & _MASK64
    return h


def mock_embed(text: str, dim: int = 384, seed: int = 0) -> EmbeddingVector:
    """Deterministic hashed bag-of-words embedding.

    Lowercase the text, split on non-alphanumerics, hash each token with
    FNV-1a 64 over (seed bytes || token bytes) into one of ``dim`` buckets
    with a +-1 sign from the top hash bit, sum, and L2-normalize. A zero sum
    (for example, empty text) maps to the unit basis vector at index 0.
    """
    if dim <= 0:
        raise ConfigurationError(f"dim must be positive, got {dim}")
    acc = np.zeros(dim, dtype=np.float64)
    prefix = (seed & _MASK64).to_bytes(8, "little")
    for token in _TOKEN_RE.findall(text.lower()):
        h = _fnv1a64(prefix + token.encode("utf-8"))
        bucket = h % dim
        acc[bucket] += 1.0 if (h >> 63) == 0 else -1.0
    norm = float(np.linalg.norm(acc))
    if norm == 0.0:
        acc[0] = 1.0
    else:
        acc /= norm
    return EmbeddingVector(values=acc, dim=dim, model_id=mock_model_id(dim, seed))


# ---------------------------------------------------------------------------
# OpenAI-compatible HTTP backend
# ---------------------------------------------------------------------------


def _embed_batch_http(cfg: EmbeddingBackendConfig, batch: list[str]) -> list[EmbeddingVector]:
    payload = {"model": cfg.model_id, "input": batch}
    body = post_json(
        cfg.endpoint_url,
        payload,
        auth_headers(cfg.api_key_env_var),
        cfg.timeout,
        cfg.max_retries,
        cfg.retry_backoff,
    )
    data = body.get("data")
    if not isinstance(data, list) or len(data) != len(batch):
        raise IntegrityError(
            f"backend returned {0 if not isinstance(data, list) else len(data)} "
            f"embeddings for {len(batch)} inputs"
        )
    ordered = sorted(data, key=lambda item: item.get("index", 0))
    vectors = []
    for item in ordered:
        values = item.get("embedding")
        if not isinstance(values, list) or len(values) != cfg.dim:
            raise IntegrityError(
                f"backend returned a {len(values) if isinstance(values, list) else '?'}-dim "
                f"embedding, expected {cfg.dim}"
            )
        vectors.append(EmbeddingVector(values=np.asarray(values), dim=cfg.dim, model_id=cfg.model_id))
    return vectors


def embed(texts: list[str], cfg: EmbeddingBackendConfig) -> list[EmbeddingVector]:
    """Embed texts in order, one vector per input.

    Deterministic for a fixed backend: embedding the same text twice yields
    the same vector.
    """
    cfg.validate()
    if not texts:
        raise ValidationError("texts must be a non-empty list")
    for i, text in enumerate(texts):
        if not text:
            raise ValidationError(f"text at index {i} is empty")
    if cfg.kind == BackendKind.DETERMINISTIC_MOCK:
        return [
            replace_model_id(mock_embed(t, cfg.dim, cfg.mock_seed), cfg.model_id) for t in texts
        ]
    batches = [texts[i : i + cfg.batch_size] for i in range(0, len(texts), cfg.batch_size)]
    if len(batches) == 1:
        return _embed_batch_http(cfg, batches[0])
    with ThreadPoolExecutor(max_workers=cfg.max_in_flight) as pool:
        results = list(pool.map(lambda b: _embed_batch_http(cfg, b), batches))
    return [vec for batch in results for vec in batch]


def replace_model_id(vec: EmbeddingVector, model_id: str) -> EmbeddingVector:
    if vec.model_id == model_id:
        return vec
    return EmbeddingVector(values=vec.values, dim=vec.dim, model_id=model_id)


def embed_query(text: str, cfg: EmbeddingBackendConfig) -> EmbeddingVector:
    """Embed a single query string."""
    return embed([text], cfg)[0]


def config_for_model(model_id: str, fallback: EmbeddingBackendConfig) -> EmbeddingBackendConfig:
    """Pick the embedding config matching a knowledge base's model id.

    Mock model ids carry their own dim and seed, so queries against a
    mock-built store can be embedded without external configuration;
    anything else uses ``fallback``.
    """
    parsed = parse_mock_model_id(model_id)
    if parsed is not None:
        return mock_config(*parsed)
    return fallback


def resolve_embed_config(
    model_id: str, explicit: EmbeddingBackendConfig | None = None
) -> EmbeddingBackendConfig:
    """Embedding config for querying a store built with ``model_id``.

    An explicit config wins; otherwise mock model ids are self-describing,
    and anything else is an error because queries must be embedded by the
    same model that built the store.
    """
    if explicit is not None:
        return explicit
    parsed = parse_mock_model_id(model_id)
    if parsed is None:
        raise ConfigurationError(
            f"no embedding backend configured and model {model_id!r} is not self-describing"
        )
    return mock_config(*parsed)
