"""In-memory vector store with exact top-k retrieval and binary persistence.

Retrieval is a full scan: score every stored vector against the query and
sort. No approximate index. Ties on score are broken by unit_id ascending so
rankings are deterministic and checkable against a brute-force reference.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .corpus import KnowledgeUnit, UnitKind
from .embedder import EmbeddingBackendConfig, EmbeddingVector, embed
from .errors import (
    ConflictError,
    DomainError,
    IntegrityError,
    StoreChecksumError,
    StoreFormatError,
    StoreVersionError,
    ValidationError,
)


class Similarity(str, Enum):
    COSINE = "cosine"
    EUCLIDEAN = "euclidean"


@dataclass
class ScoredHit:
    unit_id: str
    score: float
    unit: KnowledgeUnit


def _as_array(vec) -> np.ndarray:
    if isinstance(vec, EmbeddingVector):
        return vec.values
    return np.asarray(vec, dtype=np.float64)


def cosine_similarity(a, b) -> float:
    """Normalized dot product. Scale-invariant; undefined for zero vectors."""
    va, vb = _as_array(a), _as_array(b)
    if va.shape != vb.shape:
        raise IntegrityError(f"dimension mismatch: {va.shape} vs {vb.shape}")
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise DomainError("cosine similarity is undefined for a zero vector")
    return float(np.dot(va, vb) / (na * nb))


def euclidean_distance(a, b) -> float:
    va, vb = _as_array(a), _as_array(b)
    if va.shape != vb.shape:
        raise IntegrityError(f"dimension mismatch: {va.shape} vs {vb.shape}")
    return float(np.linalg.norm(va - vb))


class KnowledgeBase:
    """unit_id → (vector, unit) with one similarity metric and one model id."""

    def __init__(self, dim: int, model_id: str, similarity: Similarity = Similarity.COSINE):
        if dim <= 0:
            raise ValidationError(f"dim must be positive, got {dim}")
        self.dim = dim
        self.model_id = model_id
        self.similarity = Similarity(similarity)
        self._units: dict[str, KnowledgeUnit] = {}
        self._vectors: dict[str, np.ndarray] = {}
        # (ids sorted ascending, row matrix, row norms); rebuilt lazily
        self._cache: tuple[list[str], np.ndarray, np.ndarray] | None = None

    def __len__(self) -> int:
        return len(self._units)

    @property
    def count(self) -> int:
        return len(self._units)

    def unit_ids(self) -> list[str]:
        return sorted(self._units)

    def get(self, unit_id: str) -> KnowledgeUnit:
        if unit_id not in self._units:
            raise ValidationError(f"unknown unit_id {unit_id!r}")
        return self._units[unit_id]

    def vector(self, unit_id: str) -> np.ndarray:
        if unit_id not in self._vectors:
            raise ValidationError(f"unknown unit_id {unit_id!r}")
        return self._vectors[unit_id].copy()

    def insert(self, unit: KnowledgeUnit, vec: EmbeddingVector) -> "KnowledgeBase":
        if vec.dim != self.dim:
            raise IntegrityError(f"vector dim {vec.dim} does not match store dim {self.dim}")
        if vec.model_id != self.model_id:
            raise IntegrityError(
                f"vector model {vec.model_id!r} does not match store model {self.model_id!r}"
            )
        if unit.unit_id in self._units:
            raise ConflictError(f"unit_id {unit.unit_id!r} already present")
        self._units[unit.unit_id] = unit
        self._vectors[unit.unit_id] = np.array(vec.values, dtype=np.float64)
        self._cache = None
        return self

    def _packed(self) -> tuple[list[str], np.ndarray, np.ndarray]:
        # Rows sorted by unit_id so a stable sort on score yields the tie rule.
        if self._cache is None:
            ids = sorted(self._units)
            matrix = np.stack([self._vectors[i] for i in ids]) if ids else np.zeros((0, self.dim))
            norms = np.linalg.norm(matrix, axis=1)
            self._cache = (ids, matrix, norms)
        return self._cache

    def retrieve_top_k(
        self, query_vec: EmbeddingVector, k: int, threshold: float | None = None
    ) -> list[ScoredHit]:
        """Exact top-k by full scan.

        Hits come back sorted by score descending, ties by unit_id ascending.
        Scores are cosine similarity, or negated Euclidean distance so that
        higher is better under either metric. A threshold, when given, drops
        hits scoring below it.
        """
        if k < 1:
            raise ValidationError(f"k must be >= 1, got {k}")
        q = _as_array(query_vec)
        if q.shape != (self.dim,):
            raise IntegrityError(f"query dim {q.shape} does not match store dim ({self.dim},)")
        ids, matrix, norms = self._packed()
        if not ids:
            return []
        if self.similarity == Similarity.COSINE:
            qn = float(np.linalg.norm(q))
            if qn == 0.0:
                raise DomainError("cosine similarity is undefined for a zero query vector")
            if np.any(norms == 0.0):
                raise DomainError("cosine store contains an all-zero vector")
            # einsum, not matmul: BLAS gemv rounding varies with row position,
            # which lets bit-identical vectors score apart and defeats the tie rule
            scores = np.einsum("ij,j->i", matrix, q) / (norms * qn)
        else:
            scores = -np.linalg.norm(matrix - q, axis=1)
        order = np.argsort(-scores, kind="stable")
        hits: list[ScoredHit] = []
        for idx in order:
            score = float(scores[idx])
            if threshold is not None and score < threshold:
                break
            uid = ids[idx]
            hits.append(ScoredHit(unit_id=uid, score=score, unit=self._units[uid]))
            if len(hits) == k:
                break
        return hits


def insert(kb: KnowledgeBase, unit: KnowledgeUnit, vec: EmbeddingVector) -> KnowledgeBase:
    return kb.insert(unit, vec)


def retrieve_top_k(
    kb: KnowledgeBase, query_vec: EmbeddingVector, k: int, threshold: float | None = None
) -> list[ScoredHit]:
    return kb.retrieve_top_k(query_vec, k, threshold)


def build_kb(
    units: list[KnowledgeUnit],
    embed_cfg: EmbeddingBackendConfig,
    similarity: Similarity = Similarity.COSINE,
) -> KnowledgeBase:
    """Embed every unit's content and load the vectors into a fresh store."""
    kb = KnowledgeBase(dim=embed_cfg.dim, model_id=embed_cfg.model_id, similarity=similarity)
    if not units:
        return kb
    vectors = embed([u.content for u in units], embed_cfg)
    for unit, vec in zip(units, vectors):
        kb.insert(unit, vec)
    return kb


# ---------------------------------------------------------------------------
# Persistence: versioned little-endian binary file
# ---------------------------------------------------------------------------
#
# Layout:
#   magic        8 bytes  b"VKBSTORE"
#   version      u32
#   dim          u32
#   similarity   u8       0 = cosine, 1 = euclidean
#   model_id     u16 length + UTF-8 bytes
#   count        u64
#   checksum     32 bytes SHA-256 of the records blob
#   records      count entries, sorted by unit_id:
#                u32 id length + UTF-8 id
#                dim float64 values
#                u32 metadata length + UTF-8 JSON (unit fields sans unit_id)

MAGIC = b"VKBSTORE"
FORMAT_VERSION = 1

_SIM_CODE = {Similarity.COSINE: 0, Similarity.EUCLIDEAN: 1}
_SIM_FROM_CODE = {v: k for k, v in _SIM_CODE.items()}


def _unit_metadata(unit: KnowledgeUnit) -> bytes:
    meta = {
        "doc_id": unit.doc_id,
        "kind": unit.kind.value,
        "ordinal": unit.ordinal,
        "content": unit.content,
        "caption": unit.caption,
        "description": unit.description,
        "char_span": list(unit.char_span) if unit.char_span is not None else None,
    }
    return json.dumps(meta, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode()


def _unit_from_metadata(unit_id: str, blob: bytes) -> KnowledgeUnit:
    meta = json.loads(blob.decode())
    span = meta.get("char_span")
    return KnowledgeUnit(
        unit_id=unit_id,
        doc_id=meta["doc_id"],
        kind=UnitKind(meta["kind"]),
        ordinal=meta["ordinal"],
        content=meta["content"],
        caption=meta.get("caption"),
        description=meta.get("description"),
        char_span=tuple(span) if span is not None else None,
    )


def save(kb: KnowledgeBase, path: str | Path) -> None:
    path = Path(path)
    records = bytearray()
    for uid in kb.unit_ids():
        id_bytes = uid.encode()
        records += struct.pack("<I", len(id_bytes)) + id_bytes
        records += kb._vectors[uid].astype("<f8").tobytes()
        meta = _unit_metadata(kb._units[uid])
        records += struct.pack("<I", len(meta)) + meta
    model_bytes = kb.model_id.encode()
    header = MAGIC
    header += struct.pack("<II", FORMAT_VERSION, kb.dim)
    header += struct.pack("<B", _SIM_CODE[kb.similarity])
    header += struct.pack("<H", len(model_bytes)) + model_bytes
    header += struct.pack("<Q", kb.count)
    header += hashlib.sha256(bytes(records)).digest()
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(header + bytes(records))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise StoreChecksumError("store file is truncated")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]


def load(path: str | Path) -> KnowledgeBase:
    data = Path(path).read_bytes()
    if len(data) < len(MAGIC) + 4:
        raise StoreFormatError("file too short to be a knowledge base store")
    if data[: len(MAGIC)] != MAGIC:
        raise StoreFormatError("bad magic: not a knowledge base store file")
    version = struct.unpack_from("<I", data, len(MAGIC))[0]
    if version != FORMAT_VERSION:
        raise StoreVersionError(found=version, expected=FORMAT_VERSION)
    reader = _Reader(data)
    reader.pos = len(MAGIC) + 4
    dim = reader.u32()
    sim_code = reader.u8()
    if sim_code not in _SIM_FROM_CODE:
        raise StoreFormatError(f"unknown similarity code {sim_code}")
    model_id = reader.take(reader.u16()).decode()
    count = reader.u64()
    stored_digest = reader.take(32)
    records = data[reader.pos :]
    if hashlib.sha256(records).digest() != stored_digest:
        raise StoreChecksumError("store checksum mismatch: file is corrupt or truncated")
    kb = KnowledgeBase(dim=dim, model_id=model_id, similarity=_SIM_FROM_CODE[sim_code])
    body = _Reader(records)
    for _ in range(count):
        uid = body.take(body.u32()).decode()
        values = np.frombuffer(body.take(8 * dim), dtype="<f8").astype(np.float64)
        unit = _unit_from_metadata(uid, body.take(body.u32()))
        kb.insert(unit, EmbeddingVector(values=values, dim=dim, model_id=model_id))
    if body.pos != len(records):
        raise StoreFormatError("trailing bytes after final record")
    return kb
