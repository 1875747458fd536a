import json

import pytest

from ragloop.agents import (
    DEFAULT_FALLBACK_MESSAGE,
    DEFAULT_PROMPTS,
    AgentRole,
    Mode,
    OrchestratorConfig,
    Outcome,
    PromptSet,
    SessionTranscript,
    Verdict,
    build_context,
    citations_for,
    parse_verdict,
    run,
    run_session,
    run_single_pass,
    transcript_to_dict,
    transcript_to_records,
)
from ragloop.embedder import BackendKind, EmbeddingBackendConfig, mock_config
from ragloop.errors import ConfigurationError, TransportError, ValidationError
from ragloop.modelgw import Rule, ScriptedBackend
from ragloop.vecstore import KnowledgeBase, ScoredHit
from conftest import make_units
from ragloop.vecstore import build_kb


ROLES = [
    AgentRole.USER_PROXY,
    AgentRole.RETRIEVER,
    AgentRole.GENERATOR,
    AgentRole.EVALUATOR,
]


def happy_backend(answer="Cited answer from doc0:text_chunk:0"):
    """Generator answers from context, evaluator always approves."""
    return ScriptedBackend(
        rules=[
            Rule("[source:", answer),
            Rule("Response:", "Clear, relevant, complete. Satisfactory"),
        ]
    )


def stubborn_backend():
    """Evaluator never approves; refiner keeps asking for more detail."""
    return ScriptedBackend(
        rules=[
            Rule("Evaluator feedback:", "try adding more detail"),
            Rule("Response:", "Too shallow. Unsatisfactory"),
            Rule("[source:", "draft answer"),
        ]
    )


def relenting_backend():
    """Rejects the first answer, approves after one refinement."""
    return ScriptedBackend(
        rules=[
            Rule("Evaluator feedback:", "refined version"),
            Rule("Query: refined version", "Now complete. Satisfactory"),
            Rule("Response:", "Missing background. Unsatisfactory"),
            Rule("[source:", "an answer"),
        ]
    )


class ExplodingBackend:
    def __init__(self, exc):
        self.exc = exc

    def complete(self, req):
        raise self.exc


class TestParseVerdict:
    @pytest.mark.parametrize(
        "text,want",
        [
            ("Satisfactory", Verdict.SATISFACTORY),
            ("satisfactory", Verdict.SATISFACTORY),
            ("Unsatisfactory", Verdict.UNSATISFACTORY),
            ("UNSATISFACTORY", Verdict.UNSATISFACTORY),
            ("The answer meets all criteria. Satisfactory.", Verdict.SATISFACTORY),
        ],
    )
    def test_simple_cases(self, text, want):
        verdict, feedback = parse_verdict(text)
        assert verdict == want
        assert feedback == text

    def test_unsatisfactory_is_not_read_as_its_suffix(self):
        verdict, _ = parse_verdict("Unsatisfactory: missing citations")
        assert verdict == Verdict.UNSATISFACTORY

    def test_last_occurrence_wins(self):
        verdict, _ = parse_verdict(
            "The draft was unsatisfactory, but the revision is Satisfactory."
        )
        assert verdict == Verdict.SATISFACTORY
        verdict, _ = parse_verdict(
            "It looked satisfactory at first glance. Final call: Unsatisfactory."
        )
        assert verdict == Verdict.UNSATISFACTORY

    def test_unparseable_defaults_to_unsatisfactory(self):
        verdict, feedback = parse_verdict("I cannot decide.")
        assert verdict == Verdict.UNSATISFACTORY
        assert feedback == "evaluator output unparseable: I cannot decide."


class TestBuildContext:
    def test_query_first_then_sources_in_rank_order(self, small_kb):
        ids = sorted(small_kb.unit_ids())[:2]
        hits = [ScoredHit(uid, 1.0, small_kb.get(uid)) for uid in ids]
        ctx = build_context("why", hits)
        blocks = ctx.split("\n\n")
        assert blocks[0] == "why"
        assert blocks[1].startswith(f"[source: doc0 / {ids[0]}]\n")
        assert small_kb.get(ids[0]).content in blocks[1]

    def test_figure_hits_render_caption_and_description(self):
        units = make_units(["plain text"])
        from ragloop.corpus import make_figure_unit

        fig = make_figure_unit("doc9", 0, caption="crack map", description="widths by lane")
        hits = [ScoredHit(fig.unit_id, 0.5, fig)]
        ctx = build_context("q", hits)
        assert "Caption: crack map" in ctx
        assert "Description: widths by lane" in ctx
        assert "[source: doc9 / doc9:figure:0]" in ctx

    def test_deterministic(self, small_kb):
        uid = sorted(small_kb.unit_ids())[0]
        hits = [ScoredHit(uid, 0.9, small_kb.get(uid))]
        assert build_context("q", hits) == build_context("q", hits)


class TestMultiAgentLoop:
    def test_happy_path(self, small_kb):
        t = run_session("what is subject 0", small_kb, None, OrchestratorConfig(), happy_backend())
        assert t.outcome == Outcome.ANSWERED
        assert t.role_sequence() == ROLES
        assert t.refinement_count == 0
        assert t.final_answer == "Cited answer from doc0:text_chunk:0"
        assert len(t.retrieved_sets) == 1
        assert [v.verdict for v in t.verdicts] == [Verdict.SATISFACTORY]

    def test_user_proxy_passes_query_through(self, small_kb):
        t = run_session("exact words", small_kb, None, OrchestratorConfig(), happy_backend())
        first = t.steps[0]
        assert first.role == AgentRole.USER_PROXY
        assert first.input == "exact words"
        assert first.output == "exact words"

    def test_retrieval_k_respected(self, small_kb):
        cfg = OrchestratorConfig(retrieval_k=2)
        t = run_session("subject", small_kb, None, cfg, happy_backend())
        assert len(t.retrieved_sets[0].hits) == 2

    def test_one_refinement_then_answer(self, small_kb):
        t = run_session("first question", small_kb, None, OrchestratorConfig(), relenting_backend())
        assert t.outcome == Outcome.ANSWERED
        assert t.refinement_count == 1
        assert t.role_sequence() == ROLES + [AgentRole.QUERY_REFINER] + ROLES[1:]
        assert [v.verdict for v in t.verdicts] == [
            Verdict.UNSATISFACTORY,
            Verdict.SATISFACTORY,
        ]
        assert len(t.retrieved_sets) == 2
        assert t.retrieved_sets[0].query_used == "first question"
        assert t.retrieved_sets[1].query_used == "refined version"

    def test_exhaustion_yields_exact_fallback(self, small_kb):
        cfg = OrchestratorConfig(max_refinements=2)
        t = run_session("anything", small_kb, None, cfg, stubborn_backend())
        assert t.outcome == Outcome.FALLBACK
        assert t.final_answer == DEFAULT_FALLBACK_MESSAGE
        assert t.refinement_count == 2
        assert len(t.retrieved_sets) == 3
        assert [v.verdict for v in t.verdicts] == [Verdict.UNSATISFACTORY] * 3
        assert t.role_sequence() == ROLES + (
            [AgentRole.QUERY_REFINER] + ROLES[1:]
        ) * 2

    def test_zero_refinements_allowed(self, small_kb):
        cfg = OrchestratorConfig(max_refinements=0)
        t = run_session("q", small_kb, None, cfg, stubborn_backend())
        assert t.outcome == Outcome.FALLBACK
        assert t.refinement_count == 0
        assert len(t.retrieved_sets) == 1
        assert AgentRole.QUERY_REFINER not in t.role_sequence()

    def test_custom_fallback_message(self, small_kb):
        cfg = OrchestratorConfig(max_refinements=0, fallback_message="no luck")
        t = run_session("q", small_kb, None, cfg, stubborn_backend())
        assert t.final_answer == "no luck"

    def test_whitespace_refinement_keeps_prior_query(self, small_kb):
        backend = ScriptedBackend(
            rules=[
                Rule("Evaluator feedback:", "   \n  "),
                Rule("Response:", "Unsatisfactory"),
                Rule("[source:", "draft"),
            ]
        )
        cfg = OrchestratorConfig(max_refinements=1)
        t = run_session("keep me", small_kb, None, cfg, backend)
        assert t.outcome == Outcome.FALLBACK
        assert [r.query_used for r in t.retrieved_sets] == ["keep me", "keep me"]

    def test_retrieved_sets_track_refinements(self, small_kb):
        for backend, cfg in [
            (happy_backend(), OrchestratorConfig()),
            (relenting_backend(), OrchestratorConfig()),
            (stubborn_backend(), OrchestratorConfig(max_refinements=2)),
        ]:
            t = run_session("first question", small_kb, None, cfg, backend)
            assert t.outcome != Outcome.ERROR
            assert len(t.retrieved_sets) == t.refinement_count + 1

    def test_timestamps_non_decreasing(self, small_kb):
        t = run_session("q", small_kb, None, OrchestratorConfig(), stubborn_backend())
        stamps = [s.timestamp for s in t.steps]
        assert stamps == sorted(stamps)

    def test_session_id_respected_and_defaulted(self, small_kb):
        t1 = run_session("q", small_kb, None, OrchestratorConfig(), happy_backend(), session_id="fixed")
        assert t1.session_id == "fixed"
        t2 = run_session("q", small_kb, None, OrchestratorConfig(), happy_backend())
        t3 = run_session("q", small_kb, None, OrchestratorConfig(), happy_backend())
        assert t2.session_id and t2.session_id != t3.session_id


class TestSinglePass:
    def test_no_evaluation_loop(self, small_kb):
        cfg = OrchestratorConfig(mode=Mode.SINGLE_PASS)
        t = run_single_pass("q", small_kb, cfg, happy_backend())
        assert t.outcome == Outcome.ANSWERED
        assert t.role_sequence() == [
            AgentRole.USER_PROXY,
            AgentRole.RETRIEVER,
            AgentRole.GENERATOR,
        ]
        assert t.verdicts == []
        assert t.refinement_count == 0
        assert len(t.retrieved_sets) == 1
        assert t.final_answer == "Cited answer from doc0:text_chunk:0"

    def test_run_dispatches_on_mode(self, small_kb):
        multi = run("q", small_kb, OrchestratorConfig(), happy_backend())
        single = run("q", small_kb, OrchestratorConfig(mode=Mode.SINGLE_PASS), happy_backend())
        assert multi.mode == Mode.MULTI_AGENT
        assert single.mode == Mode.SINGLE_PASS
        assert AgentRole.EVALUATOR in multi.role_sequence()
        assert AgentRole.EVALUATOR not in single.role_sequence()


class TestFailures:
    def test_empty_query_rejected(self, small_kb):
        with pytest.raises(ValidationError):
            run_session("", small_kb, None, OrchestratorConfig(), happy_backend())

    def test_empty_kb_rejected(self):
        kb = KnowledgeBase(dim=8, model_id="hash-bow-fnv1a-d8-s0")
        with pytest.raises(ValidationError):
            run_session("q", kb, None, OrchestratorConfig(), happy_backend())

    def test_bad_config_rejected(self, small_kb):
        with pytest.raises(ConfigurationError):
            run_session("q", small_kb, None, OrchestratorConfig(retrieval_k=0), happy_backend())

    def test_opaque_store_model_needs_explicit_embed_config(self):
        units = make_units(["text"])
        kb = KnowledgeBase(dim=4, model_id="remote-model")
        from ragloop.embedder import EmbeddingVector
        import numpy as np

        kb.insert(units[0], EmbeddingVector(np.ones(4) / 2.0, 4, "remote-model"))
        with pytest.raises(ConfigurationError):
            run_session("q", kb, None, OrchestratorConfig(), happy_backend())

    def test_chat_transport_failure_is_error_outcome(self, small_kb):
        backend = ExplodingBackend(TransportError("backend unreachable"))
        t = run_session("q", small_kb, None, OrchestratorConfig(), backend)
        assert t.outcome == Outcome.ERROR
        assert t.final_answer.startswith("session error:")
        assert t.role_sequence() == [
            AgentRole.USER_PROXY,
            AgentRole.RETRIEVER,
            AgentRole.GENERATOR,
        ]
        assert t.steps[-1].output.startswith("ERROR:")
        assert len(t.retrieved_sets) == 1

    def test_empty_model_output_is_error_outcome(self, small_kb):
        backend = ScriptedBackend(default_response="")
        t = run_session("q", small_kb, None, OrchestratorConfig(), backend)
        assert t.outcome == Outcome.ERROR
        assert "empty completion" in t.final_answer

    def test_embedding_transport_failure_is_error_outcome(self, small_kb):
        bad_embed = EmbeddingBackendConfig(
            kind=BackendKind.HTTP_ENDPOINT,
            model_id="hash-bow-fnv1a-d64-s3",
            dim=64,
            endpoint_url="http://127.0.0.1:1/v1/embeddings",
            max_retries=0,
            retry_backoff=0.01,
            timeout=0.5,
        )
        t = run_session(
            "q", small_kb, None, OrchestratorConfig(), happy_backend(), embed_cfg=bad_embed
        )
        assert t.outcome == Outcome.ERROR
        assert t.role_sequence() == [AgentRole.USER_PROXY, AgentRole.RETRIEVER]
        assert t.retrieved_sets == []

    def test_single_pass_error_path(self, small_kb):
        backend = ExplodingBackend(TransportError("down"))
        cfg = OrchestratorConfig(mode=Mode.SINGLE_PASS)
        t = run_single_pass("q", small_kb, cfg, backend)
        assert t.outcome == Outcome.ERROR
        assert t.final_answer.startswith("session error:")


class TestTranscriptSerialization:
    def test_citations_unique_and_from_final_set(self, small_kb):
        t = run_session("subject 0 alpha0", small_kb, None, OrchestratorConfig(), happy_backend())
        cites = citations_for(t)
        assert len(cites) == 3
        assert all(set(c) == {"unit_id", "doc_id", "score"} for c in cites)
        final_ids = [h.unit_id for h in t.retrieved_sets[-1].hits]
        assert [c["unit_id"] for c in cites] == final_ids

    def test_citations_empty_without_retrieval(self):
        t = SessionTranscript(session_id="s", original_query="q", mode=Mode.MULTI_AGENT)
        assert citations_for(t) == []

    def test_to_dict_is_json_ready(self, small_kb):
        t = run_session("q", small_kb, None, OrchestratorConfig(), relenting_backend())
        data = json.loads(json.dumps(transcript_to_dict(t)))
        assert data["mode"] == "multi_agent"
        assert data["outcome"] == "answered"
        assert data["refinement_count"] == 1
        assert len(data["steps"]) == len(t.steps)
        assert len(data["retrieved_sets"]) == 2
        assert data["verdicts"][0]["verdict"] == "unsatisfactory"
        assert data["citations"]

    def test_to_records_one_line_per_step(self, small_kb):
        t = run_session("q", small_kb, None, OrchestratorConfig(), happy_backend())
        lines = transcript_to_records(t)
        assert len(lines) == len(t.steps)
        parsed = [json.loads(line) for line in lines]
        assert [p["seq"] for p in parsed] == list(range(len(t.steps)))
        assert all(p["session_id"] == t.session_id for p in parsed)
        assert parsed[0]["role"] == "user_proxy"


class TestPrompts:
    def test_for_role_covers_every_agent(self):
        seen = {DEFAULT_PROMPTS.for_role(role) for role in AgentRole}
        assert len(seen) == len(list(AgentRole))
        assert all(isinstance(p, str) and p for p in seen)

    def test_from_dir_overrides_only_present_files(self, tmp_path):
        (tmp_path / "generator.txt").write_text("custom generator prompt")
        prompts = PromptSet.from_dir(tmp_path)
        assert prompts.generator == "custom generator prompt"
        assert prompts.evaluator == DEFAULT_PROMPTS.evaluator
        assert prompts.user_proxy == DEFAULT_PROMPTS.user_proxy

    def test_custom_prompts_reach_backend(self, small_kb):
        backend = happy_backend()
        prompts = PromptSet(generator="GEN-SYS-MARKER")
        run_session("q", small_kb, prompts, OrchestratorConfig(), backend)
        gen_calls = [
            r for r in backend.call_log if r.system_prompt == "GEN-SYS-MARKER"
        ]
        assert len(gen_calls) == 1
