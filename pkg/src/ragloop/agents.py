"""Multi-agent answer pipeline.

One session walks user_proxy -> retriever -> generator -> evaluator, and on
an unsatisfactory verdict loops through query_refiner -> retriever -> ... at
most max_refinements times before giving up with a fixed fallback message.
A single-pass mode (retrieve once, generate once, no evaluation) serves as
the comparison baseline.
"""

from __future__ import annotations

import json
import re
import time
import uuid
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .corpus import UnitKind
from .embedder import EmbeddingBackendConfig, embed_query, resolve_embed_config
from .errors import ConfigurationError, IntegrityError, TransportError, ValidationError
from .modelgw import chat_request, complete
from .vecstore import KnowledgeBase, ScoredHit


class AgentRole(str, Enum):
    USER_PROXY = "user_proxy"
    RETRIEVER = "retriever"
    GENERATOR = "generator"
    EVALUATOR = "evaluator"
    QUERY_REFINER = "query_refiner"


class Verdict(str, Enum):
    SATISFACTORY = "satisfactory"
    UNSATISFACTORY = "unsatisfactory"


class Outcome(str, Enum):
    ANSWERED = "answered"
    FALLBACK = "fallback"
    ERROR = "error"


class Mode(str, Enum):
    MULTI_AGENT = "multi_agent"
    SINGLE_PASS = "single_pass"


DEFAULT_FALLBACK_MESSAGE = (
    "The system could not find a satisfactory answer to this query in the indexed documents."
)

_USER_PROXY_PROMPT = """[Role]
You are the user's representative in the multi-agent system.

[Responsibilities]
- Accept and understand the user's queries.
- Clearly communicate these queries to other agents in the system."""

_RETRIEVER_PROMPT = """[Core Responsibility]
Call the function 'retrieve_contexts' to fetch relevant contexts from the database.

[Operational Constraints]
- Do NOT provide responses from internal knowledge.
- Only execute 'retrieve_contexts' using the provided query."""

_GENERATOR_PROMPT = """[Output Structure]
1. Direct Answer: State the most relevant answer concisely.
2. Examples: Summarize datasets/examples with proper citations.
3. Historical Background: Describe development factors and trends.
4. Follow-Up: Suggest 2-3 questions for deeper exploration.

[Operational Guidelines]
- Use provided context only; do not add outside information.
- If info is missing, use "insufficient information" disclaimer.
- Avoid jargon; maintain a beginner-friendly tone.
- MANDATORY: Always include citations for examples and background."""

_EVALUATOR_PROMPT = """1. Clarity: Is the response beginner-friendly?
2. Relevance: Does it address the query?
3. Completeness: Includes background and follow-ups.

Instruction: Conclude with "Satisfactory" or "Unsatisfactory".
If unsatisfactory, explain required refinements."""

_QUERY_REFINER_PROMPT = """1. Analyze feedback from EvaluatorAgent carefully.
2. Pinpoint areas for improvement in the original query.
3. Refine the query for specificity, clarity, and relevance.
4. Output only the refined query text."""

VISION_PROMPT = """You are given a figure image from a technical report.
Reply with exactly two labeled sections and nothing else:
CAPTION: the figure's caption, or a one-line title grounded in what the figure shows if no caption is visible.
DESCRIPTION: a detailed account of the figure covering the visualization type, the variables on each axis with their units and scales, the key quantitative trends and relative differences, any comparisons across categories or treatments, and whatever the legends, annotations, or labels convey."""


@dataclass(frozen=True)
class PromptSet:
    """One system prompt per agent role; defaults overridable via files."""

    user_proxy: str = _USER_PROXY_PROMPT
    retriever: str = _RETRIEVER_PROMPT
    generator: str = _GENERATOR_PROMPT
    evaluator: str = _EVALUATOR_PROMPT
    query_refiner: str = _QUERY_REFINER_PROMPT

    def for_role(self, role: AgentRole) -> str:
        return getattr(self, role.value)

    @classmethod
    def from_dir(cls, path: str | Path) -> "PromptSet":
        """Load overrides from a directory of <role>.txt files.

        Roles without a file keep their default prompt.
        """
        base = Path(path)
        overrides = {}
        for role in AgentRole:
            candidate = base / f"{role.value}.txt"
            if candidate.exists():
                overrides[role.value] = candidate.read_text()
        return cls(**overrides)


DEFAULT_PROMPTS = PromptSet()


@dataclass(frozen=True)
class OrchestratorConfig:
    retrieval_k: int = 3
    max_refinements: int = 2
    relevance_threshold: float | None = None
    fallback_message: str = DEFAULT_FALLBACK_MESSAGE
    mode: Mode = Mode.MULTI_AGENT

    def validate(self) -> None:
        if self.retrieval_k < 1:
            raise ConfigurationError(f"retrieval_k must be >= 1, got {self.retrieval_k}")
        if self.max_refinements < 0:
            raise ConfigurationError(
                f"max_refinements must be >= 0, got {self.max_refinements}"
            )


@dataclass
class Step:
    role: AgentRole
    input: str
    output: str
    timestamp: float


@dataclass
class VerdictRecord:
    verdict: Verdict
    feedback: str


@dataclass
class RetrievedSet:
    query_used: str
    hits: list[ScoredHit]


@dataclass
class SessionTranscript:
    session_id: str
    original_query: str
    mode: Mode
    steps: list[Step] = field(default_factory=list)
    refinement_count: int = 0
    final_answer: str = ""
    verdicts: list[VerdictRecord] = field(default_factory=list)
    retrieved_sets: list[RetrievedSet] = field(default_factory=list)
    outcome: Outcome = Outcome.ERROR

    def role_sequence(self) -> list[AgentRole]:
        return [s.role for s in self.steps]


_VERDICT_RE = re.compile(r"unsatisfactory|satisfactory", re.IGNORECASE)


def parse_verdict(evaluator_output: str) -> tuple[Verdict, str]:
    """Extract the verdict from evaluator text.

    The LAST keyword occurrence wins, so prose that restates criteria before
    concluding parses correctly. The alternation order matters: at the start
    of "unsatisfactory" the longer keyword must win, or the embedded
    "satisfactory" would be counted instead.
    """
    matches = list(_VERDICT_RE.finditer(evaluator_output))
    if not matches:
        return (
            Verdict.UNSATISFACTORY,
            "evaluator output unparseable: " + evaluator_output,
        )
    return Verdict(matches[-1].group(0).lower()), evaluator_output


def _render_hit_body(hit: ScoredHit) -> str:
    unit = hit.unit
    if unit.kind == UnitKind.FIGURE:
        return f"Caption: {unit.caption}\nDescription: {unit.description}"
    return unit.content


def build_context(query: str, hits: list[ScoredHit]) -> str:
    """Assemble the generator's input: the query, then each hit in rank order.

    Deterministic template so identical inputs give byte-identical context.
    """
    parts = [query]
    for hit in hits:
        parts.append(f"[source: {hit.unit.doc_id} / {hit.unit_id}]\n{_render_hit_body(hit)}")
    return "\n\n".join(parts)


def _hit_summary(hits: list[ScoredHit]) -> str:
    if not hits:
        return "(no hits)"
    return "\n".join(f"{h.unit_id}\t{h.score:.6f}" for h in hits)


class _SessionAborted(Exception):
    pass


class _SessionRunner:
    def __init__(self, query, kb, prompts, cfg, chat_backend, embed_cfg, session_id):
        if not query:
            raise ValidationError("query must be non-empty")
        if kb.count == 0:
            raise ValidationError("knowledge base is empty; ingest documents first")
        cfg.validate()
        self.kb = kb
        self.prompts = prompts or DEFAULT_PROMPTS
        self.cfg = cfg
        self.backend = chat_backend
        self.embed_cfg = resolve_embed_config(kb.model_id, embed_cfg)
        self.t = SessionTranscript(
            session_id=session_id or uuid.uuid4().hex,
            original_query=query,
            mode=cfg.mode,
        )

    def _record(self, role: AgentRole, input_text: str, output_text: str) -> None:
        self.t.steps.append(Step(role=role, input=input_text, output=output_text, timestamp=time.time()))

    def _ask_model(self, role: AgentRole, content: str) -> str:
        req = chat_request(self.prompts.for_role(role), content)
        try:
            out = complete(req, self.backend)
        except (TransportError, IntegrityError) as exc:
            self._record(role, content, f"ERROR: {exc}")
            raise _SessionAborted(str(exc))
        self._record(role, content, out)
        return out

    def _retrieve(self, query: str) -> list[ScoredHit]:
        try:
            qvec = embed_query(query, self.embed_cfg)
        except (TransportError, IntegrityError) as exc:
            self._record(AgentRole.RETRIEVER, query, f"ERROR: {exc}")
            raise _SessionAborted(str(exc))
        hits = self.kb.retrieve_top_k(qvec, self.cfg.retrieval_k, self.cfg.relevance_threshold)
        self.t.retrieved_sets.append(RetrievedSet(query_used=query, hits=hits))
        self._record(AgentRole.RETRIEVER, query, _hit_summary(hits))
        return hits

    def _generate(self, query: str, hits: list[ScoredHit]) -> str:
        return self._ask_model(AgentRole.GENERATOR, build_context(query, hits))

    def run_multi_agent(self) -> SessionTranscript:
        t = self.t
        self._record(AgentRole.USER_PROXY, t.original_query, t.original_query)
        query = t.original_query
        try:
            while True:
                hits = self._retrieve(query)
                answer = self._generate(query, hits)
                eval_input = f"Query: {query}\n\nResponse: {answer}"
                verdict, feedback = parse_verdict(
                    self._ask_model(AgentRole.EVALUATOR, eval_input)
                )
                t.verdicts.append(VerdictRecord(verdict=verdict, feedback=feedback))
                if verdict == Verdict.SATISFACTORY:
                    t.final_answer = answer
                    t.outcome = Outcome.ANSWERED
                    return t
                if t.refinement_count >= self.cfg.max_refinements:
                    t.final_answer = self.cfg.fallback_message
                    t.outcome = Outcome.FALLBACK
                    return t
                refine_input = (
                    f"Original query: {query}\n\nEvaluator feedback: {feedback}"
                )
                refined = self._ask_model(AgentRole.QUERY_REFINER, refine_input)
                t.refinement_count += 1
                # a refiner that emits only whitespace keeps the prior query
                query = refined.strip() or query
        except _SessionAborted as exc:
            t.final_answer = f"session error: {exc}"
            t.outcome = Outcome.ERROR
            return t

    def run_single_pass(self) -> SessionTranscript:
        t = self.t
        self._record(AgentRole.USER_PROXY, t.original_query, t.original_query)
        try:
            hits = self._retrieve(t.original_query)
            t.final_answer = self._generate(t.original_query, hits)
            t.outcome = Outcome.ANSWERED
        except _SessionAborted as exc:
            t.final_answer = f"session error: {exc}"
            t.outcome = Outcome.ERROR
        return t


def run_session(
    query: str,
    kb: KnowledgeBase,
    prompts: PromptSet | None,
    cfg: OrchestratorConfig,
    chat_backend,
    embed_cfg: EmbeddingBackendConfig | None = None,
    session_id: str | None = None,
) -> SessionTranscript:
    """Run one full multi-agent session for a query."""
    runner = _SessionRunner(query, kb, prompts, cfg, chat_backend, embed_cfg, session_id)
    return runner.run_multi_agent()


def run_single_pass(
    query: str,
    kb: KnowledgeBase,
    cfg: OrchestratorConfig,
    chat_backend,
    prompts: PromptSet | None = None,
    embed_cfg: EmbeddingBackendConfig | None = None,
    session_id: str | None = None,
) -> SessionTranscript:
    """Baseline: one retrieval, one generation, no evaluation loop."""
    runner = _SessionRunner(query, kb, prompts, cfg, chat_backend, embed_cfg, session_id)
    return runner.run_single_pass()


def run(
    query: str,
    kb: KnowledgeBase,
    cfg: OrchestratorConfig,
    chat_backend,
    prompts: PromptSet | None = None,
    embed_cfg: EmbeddingBackendConfig | None = None,
    session_id: str | None = None,
) -> SessionTranscript:
    """Dispatch on cfg.mode."""
    if cfg.mode == Mode.SINGLE_PASS:
        return run_single_pass(
            query, kb, cfg, chat_backend, prompts=prompts, embed_cfg=embed_cfg, session_id=session_id
        )
    return run_session(
        query, kb, prompts, cfg, chat_backend, embed_cfg=embed_cfg, session_id=session_id
    )


# ---------------------------------------------------------------------------
# Transcript serialization
# ---------------------------------------------------------------------------


def citations_for(transcript: SessionTranscript) -> list[dict]:
    """Unique sources shown to the generator on the final retrieval pass."""
    if not transcript.retrieved_sets:
        return []
    seen = []
    for hit in transcript.retrieved_sets[-1].hits:
        entry = {"unit_id": hit.unit_id, "doc_id": hit.unit.doc_id, "score": hit.score}
        if entry not in seen:
            seen.append(entry)
    return seen


def transcript_to_dict(t: SessionTranscript) -> dict:
    return {
        "session_id": t.session_id,
        "original_query": t.original_query,
        "mode": t.mode.value,
        "refinement_count": t.refinement_count,
        "final_answer": t.final_answer,
        "outcome": t.outcome.value,
        "steps": [
            {
                "role": s.role.value,
                "input": s.input,
                "output": s.output,
                "timestamp": s.timestamp,
            }
            for s in t.steps
        ],
        "verdicts": [{"verdict": v.verdict.value, "feedback": v.feedback} for v in t.verdicts],
        "retrieved_sets": [
            {
                "query_used": r.query_used,
                "hits": [{"unit_id": h.unit_id, "score": h.score} for h in r.hits],
            }
            for r in t.retrieved_sets
        ],
        "citations": citations_for(t),
    }


def transcript_to_records(t: SessionTranscript) -> list[str]:
    """One structured line per step, for audit logs and the trace UI."""
    return [
        json.dumps(
            {
                "session_id": t.session_id,
                "seq": i,
                "role": s.role.value,
                "input": s.input,
                "output": s.output,
                "timestamp": s.timestamp,
            },
            ensure_ascii=False,
        )
        for i, s in enumerate(t.steps)
    ]
