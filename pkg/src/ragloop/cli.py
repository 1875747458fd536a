"""Command-line front door: ingest, ask, eval, describe-figure, serve.

Every command can run fully offline: --mock-embeddings hashes text locally
and --scripted answers chat/vision calls from a plain-text rule file.

Exit codes: 0 success, 1 usage, 2 data error, 3 backend error.
"""

from __future__ import annotations

import argparse
import json
import mimetypes
import sys
from dataclasses import replace
from pathlib import Path

from . import agents, corpus, evalkit, modelgw, vecstore
from .agents import Mode, VISION_PROMPT, citations_for, transcript_to_dict
from .config import AppConfig, load_config
from .embedder import embed, mock_config, parse_mock_model_id, resolve_embed_config
from .errors import (
    ConfigurationError,
    ConflictError,
    DomainError,
    EngineError,
    ExtractionError,
    IntegrityError,
    ManifestError,
    StoreFormatError,
    TransportError,
    ValidationError,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_BACKEND = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on bad flags; this contract reserves 2 for
    # data errors, so usage problems are rerouted to exit code 1
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="ragloop", description=__doc__, add_help=True)
    parser.add_argument("--config", help="INI config file", default=None)
    parser.add_argument(
        "--plain", action="store_true", help="machine-parseable JSON output on stdout"
    )
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p_ingest = sub.add_parser("ingest", help="chunk, embed, and store a corpus manifest")
    p_ingest.add_argument("--manifest", required=True)
    p_ingest.add_argument("--store", required=True)
    p_ingest.add_argument(
        "--mock-embeddings",
        action="store_true",
        help="embed with the offline deterministic hasher",
    )
    p_ingest.add_argument(
        "--scripted", default=None, help="rule file for the vision backend (figure descriptions)"
    )

    p_ask = sub.add_parser("ask", help="answer one query against a stored knowledge base")
    p_ask.add_argument("--query", required=True)
    p_ask.add_argument("--store", default=None, help="knowledge base path (default from config)")
    p_ask.add_argument("--mode", choices=[m.value for m in Mode], default=None)
    p_ask.add_argument("--k", type=int, default=None, help="retrieval depth")
    p_ask.add_argument("--max-refinements", type=int, default=None)
    p_ask.add_argument("--scripted", default=None, help="chat backend rule file")

    p_eval = sub.add_parser("eval", help="score retrieval quality over a labeled query set")
    p_eval.add_argument("--queries", required=True)
    p_eval.add_argument("--store", required=True)
    p_eval.add_argument("--mode", choices=[m.value for m in Mode], default=None)
    p_eval.add_argument("--k", type=int, default=None)
    p_eval.add_argument(
        "--k-grid",
        action="store_true",
        help="score k in {1,3,5} for both modes instead of a single run",
    )
    p_eval.add_argument("--judge", choices=["scripted", "http"], default=None,
                        help="label unlabeled queries with this backend before scoring")
    p_eval.add_argument("--overrides", default=None, help="manual label overrides file")
    p_eval.add_argument("--scripted", default=None, help="chat backend rule file")
    p_eval.add_argument("--report-out", default="eval_report.json")

    p_fig = sub.add_parser(
        "describe-figure", help="produce a figure manifest entry from an image"
    )
    p_fig.add_argument("--image", required=True)
    p_fig.add_argument("--out", required=True, help="where to write the manifest fragment")
    p_fig.add_argument("--scripted", default=None, help="vision backend rule file")

    p_serve = sub.add_parser("serve", help="run the HTTP service")
    p_serve.add_argument("--host", default=None)
    p_serve.add_argument("--port", type=int, default=None)

    return parser


def _chat_backend(args, cfg: AppConfig):
    if getattr(args, "scripted", None):
        return modelgw.load_rule_file(args.scripted)
    return cfg.chat.build()


def _vision_backend(args, cfg: AppConfig):
    if getattr(args, "scripted", None):
        return modelgw.load_rule_file(args.scripted)
    return cfg.vision.build()


def _load_store(path: str) -> vecstore.KnowledgeBase:
    if not Path(path).exists():
        raise ValidationError(f"knowledge base not found: {path}")
    return vecstore.load(path)


def _describe_image_via(backend):
    def describe(image_path: str) -> tuple[str, str]:
        data = Path(image_path).read_bytes()
        media = mimetypes.guess_type(image_path)[0] or "image/png"
        req = modelgw.VisionRequest(prompt=VISION_PROMPT, image_bytes=data, media_type=media)
        return modelgw.describe_figure(req, backend)

    return describe


def _cmd_ingest(args, cfg: AppConfig) -> int:
    embed_cfg = cfg.embedding
    if args.mock_embeddings:
        embed_cfg = mock_config(dim=cfg.embedding.dim, seed=cfg.embedding.mock_seed)
    describe = _describe_image_via(_vision_backend(args, cfg))
    docs, units = corpus.load_corpus(args.manifest, describe_image=describe)
    kb = vecstore.KnowledgeBase(
        dim=embed_cfg.dim,
        model_id=embed_cfg.model_id,
        similarity=vecstore.Similarity(cfg.service.store_similarity),
    )
    if units:
        for unit, vec in zip(units, embed([u.content for u in units], embed_cfg)):
            kb.insert(unit, vec)
    vecstore.save(kb, args.store)
    figures = sum(1 for u in units if u.kind == corpus.UnitKind.FIGURE)
    if args.plain:
        print(json.dumps({"docs": len(docs), "units": len(units), "figures": figures,
                          "store": args.store}))
    else:
        print(f"docs={len(docs)} units={len(units)} figures={figures} store={args.store}")
    return EXIT_OK


def _one_line(text: str, limit: int = 100) -> str:
    flat = " ".join(text.split())
    return flat if len(flat) <= limit else flat[: limit - 3] + "..."


def _cmd_ask(args, cfg: AppConfig) -> int:
    kb = _load_store(args.store or cfg.service.store_path)
    orch = cfg.orchestrator
    if args.mode:
        orch = replace(orch, mode=Mode(args.mode))
    if args.k is not None:
        orch = replace(orch, retrieval_k=args.k)
    if args.max_refinements is not None:
        orch = replace(orch, max_refinements=args.max_refinements)
    backend = _chat_backend(args, cfg)
    embed_cfg = resolve_embed_config(kb.model_id, None if _is_mock_store(kb) else cfg.embedding)
    transcript = agents.run(
        args.query, kb, orch, backend, prompts=cfg.prompts, embed_cfg=embed_cfg
    )
    if args.plain:
        print(json.dumps(transcript_to_dict(transcript), ensure_ascii=False))
    else:
        print(f"session: {transcript.session_id}")
        print("trace:")
        for step in transcript.steps:
            print(f"  [{step.role.value}] {_one_line(step.output)}")
        citation_ids = [c["unit_id"] for c in citations_for(transcript)]
        print(f"outcome: {transcript.outcome.value}")
        print(f"refinements: {transcript.refinement_count}")
        print(f"citations: {', '.join(citation_ids) if citation_ids else '(none)'}")
        print("answer:")
        print(transcript.final_answer)
    return EXIT_BACKEND if transcript.outcome == agents.Outcome.ERROR else EXIT_OK


def _is_mock_store(kb: vecstore.KnowledgeBase) -> bool:
    return parse_mock_model_id(kb.model_id) is not None


def _cmd_eval(args, cfg: AppConfig) -> int:
    kb = _load_store(args.store)
    backend = _chat_backend(args, cfg)
    embed_cfg = resolve_embed_config(kb.model_id, None if _is_mock_store(kb) else cfg.embedding)
    queries = evalkit.load_query_set(args.queries)
    overrides = evalkit.load_overrides(args.overrides) if args.overrides else []
    if args.judge:
        judge_backend = backend if args.judge == "scripted" else cfg.chat.build()
        queries = evalkit.label_queries(
            queries, kb, judge_backend, args.k or cfg.orchestrator.retrieval_k,
            embed_cfg=embed_cfg,
        )
    if overrides:
        queries = evalkit.apply_override_labels(queries, overrides)
    ks = [1, 3, 5] if args.k_grid else [args.k or cfg.orchestrator.retrieval_k]
    modes = [Mode.MULTI_AGENT, Mode.SINGLE_PASS] if args.k_grid else [
        Mode(args.mode) if args.mode else cfg.orchestrator.mode
    ]
    reports = {}
    errored = False
    for mode in modes:
        report = evalkit.run_eval(
            queries, kb, cfg.orchestrator, backend, mode, ks=ks,
            prompts=cfg.prompts, embed_cfg=embed_cfg,
        )
        reports[mode.value] = report
        errored = errored or bool(report.errored)
        if not args.plain:
            print(f"== mode: {mode.value} ==")
            print(evalkit.render_report_table(report))
    payload = {name: evalkit.report_to_dict(r) for name, r in reports.items()}
    Path(args.report_out).write_text(json.dumps(payload, ensure_ascii=False, indent=2))
    if args.plain:
        print(json.dumps(payload, ensure_ascii=False))
    else:
        print(f"report written to {args.report_out}")
    return EXIT_DATA if errored else EXIT_OK


def _cmd_describe_figure(args, cfg: AppConfig) -> int:
    backend = _vision_backend(args, cfg)
    data = Path(args.image).read_bytes()
    media = mimetypes.guess_type(args.image)[0] or "image/png"
    req = modelgw.VisionRequest(prompt=VISION_PROMPT, image_bytes=data, media_type=media)
    caption, description = modelgw.describe_figure(req, backend)
    fragment = {"caption": caption, "description": description}
    Path(args.out).write_text(json.dumps(fragment, ensure_ascii=False, indent=2))
    if args.plain:
        print(json.dumps(fragment, ensure_ascii=False))
    else:
        print(f"fragment written to {args.out}")
    return EXIT_OK


def _cmd_serve(args, cfg: AppConfig) -> int:
    import uvicorn

    from .service import create_app

    host = args.host or cfg.service.host
    port = args.port or cfg.service.port
    uvicorn.run(create_app(cfg), host=host, port=port)
    return EXIT_OK


_COMMANDS = {
    "ingest": _cmd_ingest,
    "ask": _cmd_ask,
    "eval": _cmd_eval,
    "describe-figure": _cmd_describe_figure,
    "serve": _cmd_serve,
}


def entrypoint(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if not args.command:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        cfg = load_config(args.config)
        return _COMMANDS[args.command](args, cfg)
    except ExtractionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.raw_output:
            print("raw model output follows:", file=sys.stderr)
            print(exc.raw_output, file=sys.stderr)
        return EXIT_BACKEND
    except (TransportError, IntegrityError) as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (
        ManifestError,
        ValidationError,
        ConfigurationError,
        ConflictError,
        DomainError,
        StoreFormatError,
        OSError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(entrypoint())


if __name__ == "__main__":
    main()
