"""Retrieval-quality measurement.

Precision@k and Recall@k per query, macro-averaged over a query set, with
unit-level and document-level grading, an LLM-as-judge labeling helper, and
a single-pass vs multi-agent comparison runner.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

from . import agents
from .corpus import KnowledgeUnit
from .embedder import EmbeddingBackendConfig, embed_query, resolve_embed_config
from .errors import DomainError, ManifestError, ValidationError
from .modelgw import chat_request, complete
from .vecstore import KnowledgeBase


class RelevanceLabel(str, Enum):
    RELEVANT = "relevant"
    NOT_RELEVANT = "not_relevant"


class LabelOrigin(str, Enum):
    LLM_JUDGE = "llm_judge"
    MANUAL_OVERRIDE = "manual_override"


@dataclass(frozen=True)
class EvalQuery:
    query_id: str
    text: str
    relevant_unit_ids: frozenset[str] = frozenset()
    topic_tag: str | None = None


@dataclass
class JudgeLabel:
    label: RelevanceLabel
    origin: LabelOrigin
    needs_review: bool = False


@dataclass
class EvalRecord:
    query_id: str
    retrieved_ids: list[str]
    k: int
    precision_at_k: float
    recall_at_k: float
    doc_precision_at_k: float
    doc_recall_at_k: float
    outcome: str
    judge_labels: dict[str, JudgeLabel] = field(default_factory=dict)


@dataclass
class MacroRow:
    precision: float
    recall: float
    doc_precision: float
    doc_recall: float
    query_count: int


@dataclass
class EvalReport:
    mode: agents.Mode
    ks: list[int]
    records: list[EvalRecord]
    macro: dict[int, MacroRow]
    skipped: list[str]
    errored: list[str]
    config_snapshot: dict
    per_topic: dict[str, MacroRow]


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def precision_at_k(retrieved: list[str], relevant: set[str] | frozenset[str], k: int) -> float:
    """Relevant hits among the top k, over a FIXED denominator of k.

    Retrieving fewer than k items lowers precision rather than shrinking the
    denominator.
    """
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    return len(set(retrieved[:k]) & set(relevant)) / k


def recall_at_k(retrieved: list[str], relevant: set[str] | frozenset[str], k: int) -> float:
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if not relevant:
        raise DomainError("recall is undefined for an empty relevant set")
    return len(set(retrieved[:k]) & set(relevant)) / len(relevant)


def macro_average(values: list[float]) -> float:
    """Unweighted mean over queries."""
    if not values:
        raise DomainError("macro average of zero queries is undefined")
    return sum(values) / len(values)


def doc_of(unit_id: str) -> str:
    """Recover the document id from a unit id (kind and ordinal never
    contain ':', so splitting from the right is safe even for doc ids
    that do)."""
    return unit_id.rsplit(":", 2)[0]


def doc_precision_at_k(retrieved: list[str], relevant_units: set[str] | frozenset[str], k: int) -> float:
    """Grade each retrieved unit by whether its parent document is relevant."""
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    relevant_docs = {doc_of(u) for u in relevant_units}
    return sum(1 for u in retrieved[:k] if doc_of(u) in relevant_docs) / k


def doc_recall_at_k(retrieved: list[str], relevant_units: set[str] | frozenset[str], k: int) -> float:
    """Fraction of relevant documents covered by the top-k units."""
    if not relevant_units:
        raise DomainError("recall is undefined for an empty relevant set")
    relevant_docs = {doc_of(u) for u in relevant_units}
    covered = {doc_of(u) for u in retrieved[:k]} & relevant_docs
    return len(covered) / len(relevant_docs)


# ---------------------------------------------------------------------------
# LLM-as-judge labeling with manual override
# ---------------------------------------------------------------------------

JUDGE_PROMPT = """You decide whether a document is relevant to a query.
Relevant means the document contains information that directly helps answer the query.
End your reply with exactly one of: RELEVANT or NOT_RELEVANT."""

_JUDGE_RE = re.compile(r"not[_\s]?relevant|relevant", re.IGNORECASE)


def judge_relevance(query_text: str, unit: KnowledgeUnit, chat_backend) -> JudgeLabel:
    """Binary relevance from a model, parsed by last keyword occurrence.

    Output with neither keyword is treated as not_relevant and flagged for
    manual review instead of failing the run.
    """
    content = f"Query: {query_text}\n\nDocument:\n{unit.content}"
    out = complete(chat_request(JUDGE_PROMPT, content), chat_backend)
    matches = list(_JUDGE_RE.finditer(out))
    if not matches:
        return JudgeLabel(
            label=RelevanceLabel.NOT_RELEVANT,
            origin=LabelOrigin.LLM_JUDGE,
            needs_review=True,
        )
    keyword = matches[-1].group(0).lower()
    label = RelevanceLabel.RELEVANT if keyword == "relevant" else RelevanceLabel.NOT_RELEVANT
    return JudgeLabel(label=label, origin=LabelOrigin.LLM_JUDGE)


@dataclass(frozen=True)
class Override:
    query_id: str
    target_id: str
    label: RelevanceLabel


def apply_overrides(
    labels: dict[str, JudgeLabel], query_id: str, overrides: list[Override]
) -> dict[str, JudgeLabel]:
    """Manual overrides beat judge labels. Override ids may name a unit or a
    whole document (every labeled unit of that document flips)."""
    out = dict(labels)
    for ov in overrides:
        if ov.query_id != query_id:
            continue
        for uid in list(out):
            if uid == ov.target_id or doc_of(uid) == ov.target_id:
                out[uid] = JudgeLabel(label=ov.label, origin=LabelOrigin.MANUAL_OVERRIDE)
        if ov.target_id not in out and doc_of(ov.target_id) != ov.target_id:
            out[ov.target_id] = JudgeLabel(label=ov.label, origin=LabelOrigin.MANUAL_OVERRIDE)
    return out


def label_queries(
    queries: list[EvalQuery],
    kb: KnowledgeBase,
    chat_backend,
    k: int,
    embed_cfg: EmbeddingBackendConfig | None = None,
    overrides: list[Override] | None = None,
) -> list[EvalQuery]:
    """Fill in missing relevance labels by judging each query's top-k pool.

    Queries that already carry labels pass through untouched. The judged
    pool is the top-k retrieval for the query's own text, so recall against
    these labels measures whether later retrievals keep finding what the
    judge accepted. Manual overrides are applied afterward and win.
    """
    ecfg = resolve_embed_config(kb.model_id, embed_cfg)
    out: list[EvalQuery] = []
    for q in queries:
        if q.relevant_unit_ids:
            out.append(q)
            continue
        hits = kb.retrieve_top_k(embed_query(q.text, ecfg), k)
        labels = {h.unit_id: judge_relevance(q.text, h.unit, chat_backend) for h in hits}
        relevant = frozenset(
            uid for uid, lab in labels.items() if lab.label == RelevanceLabel.RELEVANT
        )
        out.append(replace(q, relevant_unit_ids=relevant))
    if overrides:
        out = apply_override_labels(out, overrides)
    return out


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def load_query_set(path: str | Path) -> list[EvalQuery]:
    """Newline-delimited JSON: {query_id, text, relevant_ids?, topic_tag?}."""
    queries: list[EvalQuery] = []
    seen: set[str] = set()
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"invalid JSON: {exc.msg}", line=lineno)
        if not isinstance(record, dict):
            raise ManifestError("record must be an object", line=lineno)
        qid = record.get("query_id")
        text = record.get("text")
        if not qid or not isinstance(qid, str):
            raise ManifestError("missing or invalid query_id", line=lineno)
        if not text or not isinstance(text, str):
            raise ManifestError("missing or invalid text", line=lineno)
        if qid in seen:
            raise ManifestError(f"duplicate query_id {qid!r}", line=lineno)
        seen.add(qid)
        relevant = record.get("relevant_ids", [])
        if not isinstance(relevant, list) or not all(isinstance(r, str) for r in relevant):
            raise ManifestError("relevant_ids must be a list of strings", line=lineno)
        queries.append(
            EvalQuery(
                query_id=qid,
                text=text,
                relevant_unit_ids=frozenset(relevant),
                topic_tag=record.get("topic_tag"),
            )
        )
    return queries


def load_overrides(path: str | Path) -> list[Override]:
    """Newline-delimited JSON: {query_id, id, label}."""
    overrides: list[Override] = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"invalid JSON: {exc.msg}", line=lineno)
        try:
            label = RelevanceLabel(record["label"])
        except (KeyError, ValueError):
            raise ManifestError("label must be 'relevant' or 'not_relevant'", line=lineno)
        if "query_id" not in record or "id" not in record:
            raise ManifestError("override needs query_id and id", line=lineno)
        overrides.append(Override(query_id=record["query_id"], target_id=record["id"], label=label))
    return overrides


def apply_override_labels(queries: list[EvalQuery], overrides: list[Override]) -> list[EvalQuery]:
    """Fold manual overrides into each query's relevant set."""
    by_query: dict[str, list[Override]] = {}
    for ov in overrides:
        by_query.setdefault(ov.query_id, []).append(ov)
    out = []
    for q in queries:
        relevant = set(q.relevant_unit_ids)
        for ov in by_query.get(q.query_id, []):
            if ov.label == RelevanceLabel.RELEVANT:
                relevant.add(ov.target_id)
            else:
                relevant = {
                    u for u in relevant if u != ov.target_id and doc_of(u) != ov.target_id
                }
        out.append(replace(q, relevant_unit_ids=frozenset(relevant)))
    return out


# ---------------------------------------------------------------------------
# Comparison runner
# ---------------------------------------------------------------------------


def _macro_over(records: list[EvalRecord]) -> MacroRow:
    return MacroRow(
        precision=macro_average([r.precision_at_k for r in records]),
        recall=macro_average([r.recall_at_k for r in records]),
        doc_precision=macro_average([r.doc_precision_at_k for r in records]),
        doc_recall=macro_average([r.doc_recall_at_k for r in records]),
        query_count=len(records),
    )


def run_eval(
    queries: list[EvalQuery],
    kb: KnowledgeBase,
    cfg: agents.OrchestratorConfig,
    chat_backend,
    mode: agents.Mode,
    ks: list[int] | None = None,
    prompts: agents.PromptSet | None = None,
    embed_cfg: EmbeddingBackendConfig | None = None,
) -> EvalReport:
    """Score every labeled query through the chosen mode.

    The session's FINAL retrieval set is what gets graded, so refinement
    gets credit when it recovers units the first phrasing missed. Retrieval
    runs once at max(ks) and each smaller k grades a prefix of that ranking.
    Unlabeled queries are reported as skipped, never silently dropped.
    """
    ks = sorted(set(ks or [cfg.retrieval_k]))
    if any(k < 1 for k in ks):
        raise ValidationError("every k must be >= 1")
    run_cfg = replace(cfg, retrieval_k=max(ks), mode=mode)
    records: list[EvalRecord] = []
    skipped: list[str] = []
    errored: list[str] = []
    for q in sorted(queries, key=lambda q: q.query_id):
        if not q.relevant_unit_ids:
            skipped.append(q.query_id)
            continue
        transcript = agents.run(
            q.text, kb, run_cfg, chat_backend, prompts=prompts, embed_cfg=embed_cfg
        )
        if transcript.outcome == agents.Outcome.ERROR or not transcript.retrieved_sets:
            errored.append(q.query_id)
            continue
        retrieved = [h.unit_id for h in transcript.retrieved_sets[-1].hits]
        for k in ks:
            records.append(
                EvalRecord(
                    query_id=q.query_id,
                    retrieved_ids=retrieved[:k],
                    k=k,
                    precision_at_k=precision_at_k(retrieved, q.relevant_unit_ids, k),
                    recall_at_k=recall_at_k(retrieved, q.relevant_unit_ids, k),
                    doc_precision_at_k=doc_precision_at_k(retrieved, q.relevant_unit_ids, k),
                    doc_recall_at_k=doc_recall_at_k(retrieved, q.relevant_unit_ids, k),
                    outcome=transcript.outcome.value,
                )
            )
    macro = {
        k: _macro_over([r for r in records if r.k == k])
        for k in ks
        if any(r.k == k for r in records)
    }
    primary_k = max(ks)
    by_topic: dict[str, list[EvalRecord]] = {}
    labeled = {q.query_id: q for q in queries}
    for r in records:
        if r.k != primary_k:
            continue
        topic = labeled[r.query_id].topic_tag or "untagged"
        by_topic.setdefault(topic, []).append(r)
    per_topic = {topic: _macro_over(rs) for topic, rs in sorted(by_topic.items())}
    snapshot = {
        "mode": mode.value,
        "ks": ks,
        "retrieval_k": run_cfg.retrieval_k,
        "max_refinements": run_cfg.max_refinements,
        "relevance_threshold": run_cfg.relevance_threshold,
        "kb_model_id": kb.model_id,
        "kb_similarity": kb.similarity.value,
        "kb_size": kb.count,
    }
    return EvalReport(
        mode=mode,
        ks=ks,
        records=records,
        macro=macro,
        skipped=skipped,
        errored=errored,
        config_snapshot=snapshot,
        per_topic=per_topic,
    )


def report_to_dict(report: EvalReport) -> dict:
    return {
        "mode": report.mode.value,
        "ks": report.ks,
        "config": report.config_snapshot,
        "records": [
            {
                "query_id": r.query_id,
                "k": r.k,
                "retrieved_ids": r.retrieved_ids,
                "precision_at_k": r.precision_at_k,
                "recall_at_k": r.recall_at_k,
                "doc_precision_at_k": r.doc_precision_at_k,
                "doc_recall_at_k": r.doc_recall_at_k,
                "outcome": r.outcome,
            }
            for r in report.records
        ],
        "macro": {
            str(k): {
                "precision": m.precision,
                "recall": m.recall,
                "doc_precision": m.doc_precision,
                "doc_recall": m.doc_recall,
                "query_count": m.query_count,
            }
            for k, m in sorted(report.macro.items())
        },
        "per_topic": {
            topic: {
                "precision": m.precision,
                "recall": m.recall,
                "doc_precision": m.doc_precision,
                "doc_recall": m.doc_recall,
                "query_count": m.query_count,
            }
            for topic, m in report.per_topic.items()
        },
        "skipped": report.skipped,
        "errored": report.errored,
    }


def render_report_table(report: EvalReport) -> str:
    """Fixed-width text table: per-query rows, macro rows, topic rows."""
    lines = []
    header = f"{'query_id':<16} {'k':>2} {'prec':>7} {'recall':>7} {'doc_prec':>8} {'doc_rec':>7}  outcome"
    lines.append(header)
    lines.append("-" * len(header))
    for r in sorted(report.records, key=lambda r: (r.query_id, r.k)):
        lines.append(
            f"{r.query_id:<16} {r.k:>2} {r.precision_at_k:>7.4f} {r.recall_at_k:>7.4f} "
            f"{r.doc_precision_at_k:>8.4f} {r.doc_recall_at_k:>7.4f}  {r.outcome}"
        )
    lines.append("-" * len(header))
    for k, m in sorted(report.macro.items()):
        lines.append(
            f"{'MACRO':<16} {k:>2} {m.precision:>7.4f} {m.recall:>7.4f} "
            f"{m.doc_precision:>8.4f} {m.doc_recall:>7.4f}  n={m.query_count}"
        )
    for topic, m in report.per_topic.items():
        lines.append(
            f"{'topic:' + topic:<16} {'':>2} {m.precision:>7.4f} {m.recall:>7.4f} "
            f"{m.doc_precision:>8.4f} {m.doc_recall:>7.4f}  n={m.query_count}"
        )
    for qid in report.skipped:
        lines.append(f"SKIPPED {qid} (no relevance labels)")
    for qid in report.errored:
        lines.append(f"ERROR {qid} (session failed)")
    return "\n".join(lines)
