"""INI configuration covering service, orchestrator, and backend settings.

Every knob has a default that keeps the system fully offline: mock
embeddings plus scripted chat and vision backends. Pointing at real models
requires explicit [embedding]/[chat]/[vision] sections. Secrets never live
in the file, only names of environment variables that hold them.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .agents import Mode, OrchestratorConfig, PromptSet
from .embedder import BackendKind, EmbeddingBackendConfig, mock_config
from .errors import ConfigurationError
from .modelgw import HttpBackendConfig, HttpChatBackend, ScriptedBackend, load_rule_file


@dataclass(frozen=True)
class BackendSelector:
    """Which chat/vision backend to build: 'scripted' or 'http_endpoint'."""

    kind: str = "scripted"
    http: HttpBackendConfig | None = None
    rule_file: str | None = None
    default_response: str = "OK"

    def build(self):
        if self.kind == "scripted":
            if self.rule_file:
                return load_rule_file(self.rule_file)
            return ScriptedBackend(default_response=self.default_response)
        if self.kind == "http_endpoint":
            if self.http is None:
                raise ConfigurationError("http_endpoint backend requires endpoint_url")
            return HttpChatBackend(self.http)
        raise ConfigurationError(f"unknown backend kind {self.kind!r}")


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8090
    store_path: str = "kb.bin"
    transcript_dir: str = "transcripts"
    max_concurrent_sessions: int = 4
    request_timeout: float = 120.0
    store_similarity: str = "cosine"

    def validate(self) -> None:
        if self.max_concurrent_sessions < 1:
            raise ConfigurationError("max_concurrent_sessions must be >= 1")
        if not (0 < self.port < 65536):
            raise ConfigurationError(f"port out of range: {self.port}")
        if self.store_similarity not in ("cosine", "euclidean"):
            raise ConfigurationError(
                f"store_similarity must be cosine or euclidean, got {self.store_similarity!r}"
            )


@dataclass(frozen=True)
class AppConfig:
    service: ServiceConfig = field(default_factory=ServiceConfig)
    orchestrator: OrchestratorConfig = field(default_factory=OrchestratorConfig)
    embedding: EmbeddingBackendConfig = field(default_factory=mock_config)
    chat: BackendSelector = field(default_factory=BackendSelector)
    vision: BackendSelector = field(default_factory=BackendSelector)
    prompts: PromptSet = field(default_factory=PromptSet)


def _backend_selector(section: configparser.SectionProxy, name: str) -> BackendSelector:
    kind = section.get("kind", "scripted")
    if kind not in ("scripted", "http_endpoint"):
        raise ConfigurationError(f"[{name}] kind must be scripted or http_endpoint, got {kind!r}")
    http = None
    if kind == "http_endpoint":
        url = section.get("endpoint_url")
        if not url:
            raise ConfigurationError(f"[{name}] http_endpoint requires endpoint_url")
        http = HttpBackendConfig(
            endpoint_url=url,
            model_id=section.get("model_id", ""),
            timeout=section.getfloat("timeout", 60.0),
            api_key_env_var=section.get("api_key_env_var") or None,
            max_retries=section.getint("max_retries", 2),
            retry_backoff=section.getfloat("retry_backoff", 0.5),
        )
    return BackendSelector(
        kind=kind,
        http=http,
        rule_file=section.get("rule_file") or None,
        default_response=section.get("default_response", "OK"),
    )


def _embedding_config(section: configparser.SectionProxy) -> EmbeddingBackendConfig:
    kind_raw = section.get("kind", "deterministic_mock")
    try:
        kind = BackendKind(kind_raw)
    except ValueError:
        raise ConfigurationError(
            f"[embedding] kind must be deterministic_mock or http_endpoint, got {kind_raw!r}"
        )
    dim = section.getint("dim", 384)
    seed = section.getint("mock_seed", 0)
    if kind == BackendKind.DETERMINISTIC_MOCK:
        return mock_config(dim=dim, seed=seed)
    url = section.get("endpoint_url")
    if not url:
        raise ConfigurationError("[embedding] http_endpoint requires endpoint_url")
    return EmbeddingBackendConfig(
        kind=kind,
        model_id=section.get("model_id", ""),
        dim=dim,
        endpoint_url=url,
        timeout=section.getfloat("timeout", 30.0),
        api_key_env_var=section.get("api_key_env_var") or None,
        batch_size=section.getint("batch_size", 32),
        max_in_flight=section.getint("max_in_flight", 4),
        max_retries=section.getint("max_retries", 2),
        retry_backoff=section.getfloat("retry_backoff", 0.5),
    )


def _orchestrator_config(section: configparser.SectionProxy) -> OrchestratorConfig:
    threshold_raw = section.get("relevance_threshold", "").strip()
    mode_raw = section.get("mode", Mode.MULTI_AGENT.value)
    try:
        mode = Mode(mode_raw)
    except ValueError:
        raise ConfigurationError(
            f"[orchestrator] mode must be multi_agent or single_pass, got {mode_raw!r}"
        )
    cfg = OrchestratorConfig(
        retrieval_k=section.getint("retrieval_k", 3),
        max_refinements=section.getint("max_refinements", 2),
        relevance_threshold=float(threshold_raw) if threshold_raw else None,
        fallback_message=section.get(
            "fallback_message", OrchestratorConfig().fallback_message
        ),
        mode=mode,
    )
    cfg.validate()
    return cfg


def load_config(path: str | Path | None = None) -> AppConfig:
    """Parse an INI file into an AppConfig; None loads pure defaults."""
    parser = configparser.ConfigParser()
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigurationError(f"config file not found: {path}")
        try:
            parser.read_string(path.read_text())
        except configparser.Error as exc:
            raise ConfigurationError(f"cannot parse config file {path}: {exc}")

    def section(name: str) -> configparser.SectionProxy:
        if not parser.has_section(name):
            parser.add_section(name)
        return parser[name]

    svc_section = section("service")
    service = ServiceConfig(
        host=svc_section.get("host", "127.0.0.1"),
        port=svc_section.getint("port", 8090),
        store_path=svc_section.get("store_path", "kb.bin"),
        transcript_dir=svc_section.get("transcript_dir", "transcripts"),
        max_concurrent_sessions=svc_section.getint("max_concurrent_sessions", 4),
        request_timeout=svc_section.getfloat("request_timeout", 120.0),
        store_similarity=svc_section.get("store_similarity", "cosine"),
    )
    service.validate()
    prompts_dir = section("prompts").get("dir", "").strip()
    prompts = PromptSet.from_dir(prompts_dir) if prompts_dir else PromptSet()
    return AppConfig(
        service=service,
        orchestrator=_orchestrator_config(section("orchestrator")),
        embedding=_embedding_config(section("embedding")),
        chat=_backend_selector(section("chat"), "chat"),
        vision=_backend_selector(section("vision"), "vision"),
        prompts=prompts,
    )
