import json
import subprocess
import sys

import pytest

from ragloop.agents import DEFAULT_FALLBACK_MESSAGE
from ragloop.cli import EXIT_BACKEND, EXIT_DATA, EXIT_OK, EXIT_USAGE, entrypoint


def run_cli(capsys, *argv):
    code = entrypoint(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def doc_line(doc_id, text, **extra):
    return json.dumps(
        {"doc_id": doc_id, "title": doc_id, "origin": "unit-test", "text": text, **extra}
    )


@pytest.fixture
def manifest(tmp_path):
    path = tmp_path / "docs.jsonl"
    path.write_text(
        "\n".join(
            [
                doc_line("d1", "alpha bravo charlie delta echo"),
                doc_line("d2", "foxtrot golf hotel india juliet"),
                doc_line("d3", "kilo lima mike november oscar"),
            ]
        )
        + "\n"
    )
    return path


@pytest.fixture
def chat_rules(tmp_path):
    path = tmp_path / "chat_rules.txt"
    path.write_text(
        "# offline demo script\n"
        "[source: => Answer grounded in d1:text_chunk:0\n"
        "Response: => Satisfactory\n"
        "Document: => RELEVANT\n"
    )
    return path


@pytest.fixture
def vision_rules(tmp_path):
    path = tmp_path / "vision_rules.txt"
    path.write_text("* => CAPTION: generated caption\\nDESCRIPTION: generated description\n")
    return path


@pytest.fixture
def store(tmp_path, manifest, capsys):
    path = tmp_path / "kb.bin"
    code = entrypoint(
        ["ingest", "--manifest", str(manifest), "--store", str(path), "--mock-embeddings"]
    )
    capsys.readouterr()
    assert code == EXIT_OK
    return path


@pytest.fixture
def queries(tmp_path):
    path = tmp_path / "queries.jsonl"
    path.write_text(
        "\n".join(
            [
                json.dumps(
                    {
                        "query_id": "q1",
                        "text": "alpha bravo charlie",
                        "relevant_ids": ["d1:text_chunk:0"],
                    }
                ),
                json.dumps(
                    {
                        "query_id": "q2",
                        "text": "foxtrot golf hotel",
                        "relevant_ids": ["d2:text_chunk:0"],
                    }
                ),
            ]
        )
        + "\n"
    )
    return path


class TestUsage:
    def test_no_command_is_usage_error(self, capsys):
        code, _, err = run_cli(capsys)
        assert code == EXIT_USAGE
        assert "usage" in err.lower()

    def test_unknown_command(self, capsys):
        code, _, err = run_cli(capsys, "frobnicate")
        assert code == EXIT_USAGE
        assert "usage error" in err

    def test_missing_required_flag(self, capsys):
        code, _, err = run_cli(capsys, "ask")
        assert code == EXIT_USAGE

    def test_unknown_flag(self, capsys):
        code, _, _ = run_cli(capsys, "ask", "--query", "q", "--bogus")
        assert code == EXIT_USAGE

    def test_help_via_subprocess(self):
        proc = subprocess.run(
            [sys.executable, "-m", "ragloop.cli", "--help"],
            capture_output=True,
            text=True,
            timeout=60,
        )
        assert proc.returncode == 0
        for command in ("ingest", "ask", "eval", "describe-figure", "serve"):
            assert command in proc.stdout

    def test_missing_config_file(self, capsys, store):
        code, _, err = run_cli(
            capsys, "--config", "/nonexistent.ini", "ask", "--query", "q",
            "--store", str(store),
        )
        assert code == EXIT_DATA
        assert "config file not found" in err


class TestIngest:
    def test_summary_line(self, tmp_path, manifest, capsys):
        store = tmp_path / "kb.bin"
        code, out, _ = run_cli(
            capsys, "ingest", "--manifest", str(manifest), "--store", str(store),
            "--mock-embeddings",
        )
        assert code == EXIT_OK
        assert out.strip() == f"docs=3 units=3 figures=0 store={store}"
        assert store.exists()

    def test_plain_json(self, tmp_path, manifest, capsys):
        store = tmp_path / "kb.bin"
        code, out, _ = run_cli(
            capsys, "--plain", "ingest", "--manifest", str(manifest),
            "--store", str(store), "--mock-embeddings",
        )
        assert code == EXIT_OK
        data = json.loads(out)
        assert data == {"docs": 3, "units": 3, "figures": 0, "store": str(store)}

    def test_figures_described_via_scripted_vision(self, tmp_path, vision_rules, capsys):
        image = tmp_path / "fig.png"
        image.write_bytes(b"\x89PNG\r\n\x1a\nfake")
        manifest = tmp_path / "docs.jsonl"
        manifest.write_text(
            doc_line("df", "", figures=[{"image_path": str(image)}]) + "\n"
        )
        store = tmp_path / "kb.bin"
        code, out, _ = run_cli(
            capsys, "ingest", "--manifest", str(manifest), "--store", str(store),
            "--mock-embeddings", "--scripted", str(vision_rules),
        )
        assert code == EXIT_OK
        assert "figures=1" in out

        from ragloop import vecstore

        unit = vecstore.load(store).get("df:figure:0")
        assert unit.caption == "generated caption"
        assert unit.description == "generated description"

    def test_missing_manifest(self, tmp_path, capsys):
        code, _, err = run_cli(
            capsys, "ingest", "--manifest", str(tmp_path / "nope.jsonl"),
            "--store", str(tmp_path / "kb.bin"), "--mock-embeddings",
        )
        assert code == EXIT_DATA
        assert "error" in err

    def test_broken_manifest_names_line(self, tmp_path, capsys):
        manifest = tmp_path / "docs.jsonl"
        manifest.write_text(doc_line("d1", "text") + "\n{broken\n")
        code, _, err = run_cli(
            capsys, "ingest", "--manifest", str(manifest),
            "--store", str(tmp_path / "kb.bin"), "--mock-embeddings",
        )
        assert code == EXIT_DATA
        assert "line 2" in err


class TestAsk:
    def test_happy_trace_output(self, store, chat_rules, capsys):
        code, out, _ = run_cli(
            capsys, "ask", "--query", "alpha bravo", "--store", str(store),
            "--scripted", str(chat_rules),
        )
        assert code == EXIT_OK
        assert "session: " in out
        assert "[user_proxy]" in out
        assert "[retriever]" in out
        assert "[generator]" in out
        assert "[evaluator]" in out
        assert "outcome: answered" in out
        assert "refinements: 0" in out
        assert "citations: d1:text_chunk:0" in out
        assert out.rstrip().endswith("Answer grounded in d1:text_chunk:0")

    def test_plain_json_transcript(self, store, chat_rules, capsys):
        code, out, _ = run_cli(
            capsys, "--plain", "ask", "--query", "alpha bravo", "--store", str(store),
            "--scripted", str(chat_rules), "--k", "1",
        )
        assert code == EXIT_OK
        data = json.loads(out)
        assert data["outcome"] == "answered"
        assert data["citations"][0]["unit_id"] == "d1:text_chunk:0"
        assert len(data["retrieved_sets"][0]["hits"]) == 1

    def test_single_pass_mode(self, store, chat_rules, capsys):
        code, out, _ = run_cli(
            capsys, "ask", "--query", "alpha", "--store", str(store),
            "--scripted", str(chat_rules), "--mode", "single_pass",
        )
        assert code == EXIT_OK
        assert "[evaluator]" not in out

    def test_exhausted_refinements_print_fallback(self, store, tmp_path, capsys):
        rules = tmp_path / "stubborn.txt"
        rules.write_text(
            "Evaluator feedback: => rephrased\n"
            "Response: => Unsatisfactory\n"
            "[source: => a draft\n"
        )
        code, out, _ = run_cli(
            capsys, "ask", "--query", "alpha", "--store", str(store),
            "--scripted", str(rules), "--max-refinements", "1",
        )
        assert code == EXIT_OK
        assert "outcome: fallback" in out
        assert "refinements: 1" in out
        assert DEFAULT_FALLBACK_MESSAGE in out

    def test_missing_store(self, tmp_path, capsys):
        code, _, err = run_cli(
            capsys, "ask", "--query", "q", "--store", str(tmp_path / "absent.bin")
        )
        assert code == EXIT_DATA
        assert "knowledge base not found" in err

    def test_corrupt_store(self, store, capsys):
        data = store.read_bytes()
        store.write_bytes(data[:-4])
        code, _, err = run_cli(capsys, "ask", "--query", "q", "--store", str(store))
        assert code == EXIT_DATA

    def test_unreachable_chat_backend_exits_3(self, store, tmp_path, capsys):
        ini = tmp_path / "app.ini"
        ini.write_text(
            "[chat]\n"
            "kind = http_endpoint\n"
            "endpoint_url = http://127.0.0.1:1/v1/chat/completions\n"
            "max_retries = 0\n"
            "retry_backoff = 0.01\n"
            "timeout = 0.5\n"
        )
        code, out, _ = run_cli(
            capsys, "--config", str(ini), "ask", "--query", "q", "--store", str(store)
        )
        assert code == EXIT_BACKEND
        assert "outcome: error" in out


class TestDescribeFigure:
    def test_writes_fragment(self, tmp_path, vision_rules, capsys):
        image = tmp_path / "fig.png"
        image.write_bytes(b"\x89PNG fake")
        out_path = tmp_path / "fragment.json"
        code, out, _ = run_cli(
            capsys, "describe-figure", "--image", str(image), "--out", str(out_path),
            "--scripted", str(vision_rules),
        )
        assert code == EXIT_OK
        assert f"fragment written to {out_path}" in out
        fragment = json.loads(out_path.read_text())
        assert fragment == {
            "caption": "generated caption",
            "description": "generated description",
        }

    def test_plain_prints_fragment(self, tmp_path, vision_rules, capsys):
        image = tmp_path / "fig.png"
        image.write_bytes(b"x")
        code, out, _ = run_cli(
            capsys, "--plain", "describe-figure", "--image", str(image),
            "--out", str(tmp_path / "f.json"), "--scripted", str(vision_rules),
        )
        assert code == EXIT_OK
        assert json.loads(out)["caption"] == "generated caption"

    def test_unparseable_vision_output_dumps_raw(self, tmp_path, capsys):
        image = tmp_path / "fig.png"
        image.write_bytes(b"x")
        rules = tmp_path / "bad_vision.txt"
        rules.write_text("* => prose with no labels at all\n")
        code, _, err = run_cli(
            capsys, "describe-figure", "--image", str(image),
            "--out", str(tmp_path / "f.json"), "--scripted", str(rules),
        )
        assert code == EXIT_BACKEND
        assert "raw model output follows:" in err
        assert "prose with no labels at all" in err

    def test_missing_image(self, tmp_path, capsys):
        code, _, err = run_cli(
            capsys, "describe-figure", "--image", str(tmp_path / "absent.png"),
            "--out", str(tmp_path / "f.json"),
        )
        assert code == EXIT_DATA


class TestEval:
    def test_single_mode_run(self, store, queries, chat_rules, tmp_path, capsys):
        report_path = tmp_path / "report.json"
        code, out, _ = run_cli(
            capsys, "eval", "--queries", str(queries), "--store", str(store),
            "--scripted", str(chat_rules), "--mode", "single_pass", "--k", "1",
            "--report-out", str(report_path),
        )
        assert code == EXIT_OK
        assert "== mode: single_pass ==" in out
        assert "MACRO" in out
        assert f"report written to {report_path}" in out
        report = json.loads(report_path.read_text())
        assert set(report) == {"single_pass"}
        assert report["single_pass"]["macro"]["1"]["precision"] == 1.0

    def test_plain_emits_json(self, store, queries, chat_rules, tmp_path, capsys):
        code, out, _ = run_cli(
            capsys, "--plain", "eval", "--queries", str(queries), "--store", str(store),
            "--scripted", str(chat_rules), "--mode", "single_pass", "--k", "1",
            "--report-out", str(tmp_path / "r.json"),
        )
        assert code == EXIT_OK
        assert json.loads(out)["single_pass"]["skipped"] == []

    def test_k_grid_runs_both_modes(self, store, queries, chat_rules, tmp_path, capsys):
        report_path = tmp_path / "report.json"
        code, out, _ = run_cli(
            capsys, "eval", "--queries", str(queries), "--store", str(store),
            "--scripted", str(chat_rules), "--k-grid", "--report-out", str(report_path),
        )
        assert code == EXIT_OK
        assert "== mode: multi_agent ==" in out
        assert "== mode: single_pass ==" in out
        report = json.loads(report_path.read_text())
        assert set(report) == {"multi_agent", "single_pass"}
        for mode_report in report.values():
            assert mode_report["ks"] == [1, 3, 5]

    def test_judge_labels_unlabeled_queries(self, store, chat_rules, tmp_path, capsys):
        unlabeled = tmp_path / "unlabeled.jsonl"
        unlabeled.write_text(
            json.dumps({"query_id": "q1", "text": "alpha bravo charlie"}) + "\n"
        )
        report_path = tmp_path / "report.json"
        code, _, _ = run_cli(
            capsys, "eval", "--queries", str(unlabeled), "--store", str(store),
            "--scripted", str(chat_rules), "--mode", "single_pass", "--k", "1",
            "--judge", "scripted", "--report-out", str(report_path),
        )
        assert code == EXIT_OK
        report = json.loads(report_path.read_text())
        assert report["single_pass"]["skipped"] == []
        assert report["single_pass"]["records"]

    def test_unlabeled_without_judge_skipped(self, store, chat_rules, tmp_path, capsys):
        unlabeled = tmp_path / "unlabeled.jsonl"
        unlabeled.write_text(json.dumps({"query_id": "q1", "text": "alpha"}) + "\n")
        report_path = tmp_path / "report.json"
        code, out, _ = run_cli(
            capsys, "eval", "--queries", str(unlabeled), "--store", str(store),
            "--scripted", str(chat_rules), "--mode", "single_pass",
            "--report-out", str(report_path),
        )
        assert code == EXIT_OK
        assert "SKIPPED q1" in out

    def test_overrides_applied(self, store, chat_rules, tmp_path, capsys):
        unlabeled = tmp_path / "unlabeled.jsonl"
        unlabeled.write_text(
            json.dumps({"query_id": "q1", "text": "alpha bravo charlie"}) + "\n"
        )
        overrides = tmp_path / "overrides.jsonl"
        overrides.write_text(
            json.dumps({"query_id": "q1", "id": "d1:text_chunk:0", "label": "relevant"})
            + "\n"
        )
        report_path = tmp_path / "report.json"
        code, _, _ = run_cli(
            capsys, "eval", "--queries", str(unlabeled), "--store", str(store),
            "--scripted", str(chat_rules), "--mode", "single_pass", "--k", "1",
            "--overrides", str(overrides), "--report-out", str(report_path),
        )
        assert code == EXIT_OK
        report = json.loads(report_path.read_text())
        assert report["single_pass"]["records"][0]["precision_at_k"] == 1.0

    def test_errored_sessions_exit_2_but_write_report(
        self, store, queries, tmp_path, capsys
    ):
        ini = tmp_path / "app.ini"
        ini.write_text(
            "[chat]\n"
            "kind = http_endpoint\n"
            "endpoint_url = http://127.0.0.1:1/v1/chat/completions\n"
            "max_retries = 0\n"
            "retry_backoff = 0.01\n"
            "timeout = 0.5\n"
        )
        report_path = tmp_path / "report.json"
        code, out, _ = run_cli(
            capsys, "--config", str(ini), "eval", "--queries", str(queries),
            "--store", str(store), "--mode", "multi_agent",
            "--report-out", str(report_path),
        )
        assert code == EXIT_DATA
        report = json.loads(report_path.read_text())
        assert report["multi_agent"]["errored"] == ["q1", "q2"]

    def test_missing_queries_file(self, store, tmp_path, capsys):
        code, _, err = run_cli(
            capsys, "eval", "--queries", str(tmp_path / "absent.jsonl"),
            "--store", str(store), "--report-out", str(tmp_path / "r.json"),
        )
        assert code == EXIT_DATA
