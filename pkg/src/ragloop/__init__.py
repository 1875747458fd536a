"""Retrieval-augmented answering with a self-checking agent loop.

Documents are chunked and embedded into an exact-search vector store; a
multi-agent pipeline retrieves, generates, evaluates, and refines queries
until an answer passes or a refinement budget runs out. Scripted model
backends and a deterministic mock embedder make every path runnable offline.
"""

from .agents import (
    AgentRole,
    DEFAULT_FALLBACK_MESSAGE,
    Mode,
    OrchestratorConfig,
    Outcome,
    PromptSet,
    SessionTranscript,
    Verdict,
    build_context,
    parse_verdict,
    run_session,
    run_single_pass,
)
from .corpus import (
    ChunkingPolicy,
    KnowledgeUnit,
    SourceDocument,
    UnitKind,
    chunk_document,
    load_corpus,
    make_figure_unit,
)
from .embedder import (
    BackendKind,
    EmbeddingBackendConfig,
    EmbeddingVector,
    embed,
    mock_config,
    mock_embed,
)
from .errors import (
    ConfigurationError,
    ConflictError,
    DomainError,
    EngineError,
    ExtractionError,
    IntegrityError,
    ManifestError,
    StoreChecksumError,
    StoreFormatError,
    StoreVersionError,
    TransportError,
    ValidationError,
)
from .evalkit import (
    EvalQuery,
    EvalReport,
    precision_at_k,
    recall_at_k,
    run_eval,
)
from .modelgw import (
    ChatRequest,
    HttpBackendConfig,
    HttpChatBackend,
    Rule,
    ScriptedBackend,
    VisionRequest,
    complete,
    describe_figure,
    load_rule_file,
)
from .vecstore import (
    KnowledgeBase,
    ScoredHit,
    Similarity,
    build_kb,
    cosine_similarity,
    euclidean_distance,
    load,
    retrieve_top_k,
    save,
)

__all__ = [
    "AgentRole",
    "BackendKind",
    "ChatRequest",
    "ChunkingPolicy",
    "ConfigurationError",
    "ConflictError",
    "DEFAULT_FALLBACK_MESSAGE",
    "DomainError",
    "EmbeddingBackendConfig",
    "EmbeddingVector",
    "EngineError",
    "EvalQuery",
    "EvalReport",
    "ExtractionError",
    "HttpBackendConfig",
    "HttpChatBackend",
    "IntegrityError",
    "KnowledgeBase",
    "KnowledgeUnit",
    "ManifestError",
    "Mode",
    "OrchestratorConfig",
    "Outcome",
    "PromptSet",
    "Rule",
    "ScoredHit",
    "ScriptedBackend",
    "SessionTranscript",
    "Similarity",
    "SourceDocument",
    "StoreChecksumError",
    "StoreFormatError",
    "StoreVersionError",
    "TransportError",
    "UnitKind",
    "ValidationError",
    "Verdict",
    "VisionRequest",
    "build_context",
    "build_kb",
    "chunk_document",
    "complete",
    "cosine_similarity",
    "describe_figure",
    "embed",
    "euclidean_distance",
    "load",
    "load_corpus",
    "load_rule_file",
    "make_figure_unit",
    "mock_config",
    "mock_embed",
    "parse_verdict",
    "precision_at_k",
    "recall_at_k",
    "retrieve_top_k",
    "run_eval",
    "run_session",
    "run_single_pass",
    "save",
]

__version__ = "0.1.0"
