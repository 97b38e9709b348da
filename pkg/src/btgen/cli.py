"""Command-line entry point: ``btgen <subcommand> ...``.

Exit codes: 0 ok, 2 usage, 3 knowledge base, 4 backend, 5 parse,
6 expansion limit reached. Failures print one ``error[<category>]: ...``
line on stderr.
"""

from __future__ import annotations

import argparse
import datetime as dt
import hashlib
import json
import logging
import sys
from pathlib import Path

from . import bt_core, knowledge_base as kb
from .encoders import fingerprint, get_encoder
from .errors import BTGenError, KnowledgeBaseError, SchemaError
from .evaluation import (
    MatingLexicon,
    PromptVariant,
    count_part_mating,
    run_ablation,
    samples_csv,
    structure_metrics,
    summary_csv,
)
from .expansion import FROZEN, RECURSIVE, ExpansionConfig, expand_tree
from .grounding import GroundingConfig, VerbList
from .model_gateway import (
    DEFAULT_API_KEY_ENV,
    DEFAULT_ENDPOINT,
    DEFAULT_MODEL,
    ChainBackend,
    GenerationParams,
    HttpBackend,
    MockBackend,
    RecordingBackend,
    ReplayBackend,
    ReplayStore,
    complete,
    prompt_key,
)
from .phase_step import PhaseStepTask, TargetSpec, build_prompt, from_tree, parse_completion, to_tree
from .resources import bundled_task_names, load_task, transcript_fixtures_dir, toy_kb_path

log = logging.getLogger("btgen")

EXIT_USAGE = 2
EXIT_KB = 3
EXIT_EXPANSION = 6


class UsageError(BTGenError):
    category = "usage"
    exit_code = EXIT_USAGE


def _sha(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path


# -- shared option handling ------------------------------------------------

def _common_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--kb", help="knowledge-base JSON (default: bundled four-task toy base)")
    g.add_argument("--backend", choices=("mock", "replay", "replay+mock", "http"), default="replay")
    g.add_argument("--fixtures", help="replay store file or directory (default: bundled transcripts)")
    g.add_argument("--model", default=DEFAULT_MODEL)
    g.add_argument("--endpoint", default=DEFAULT_ENDPOINT)
    g.add_argument("--api-key-env", default=DEFAULT_API_KEY_ENV)
    g.add_argument("--encoder", default="reference", help="reference | trigram | st:<model> | lexicon.json")
    g.add_argument("--grounding-config", help="JSON or plain-text verb/lexicon config")
    g.add_argument("--threshold", type=float)
    g.add_argument("--verbs", help="comma-separated capability verbs")
    g.add_argument("--max-depth", type=int, default=3)
    g.add_argument("--freeze", action="store_true", help="verb-restricted, single-level expansion")
    g.add_argument("--subtask-template", default="{subtask}")
    g.add_argument("--parallelism", type=int, default=1)
    g.add_argument("--out", help="output directory")
    g.add_argument("-v", "--verbose", action="store_true")
    return p


def _grounding(args) -> GroundingConfig:
    overrides = {}
    if args.threshold is not None:
        overrides["threshold"] = args.threshold
    if args.verbs:
        overrides["verb_list"] = VerbList.parse(args.verbs)
    try:
        if args.grounding_config:
            return GroundingConfig.from_file(args.grounding_config, **overrides)
        return GroundingConfig(**overrides)
    except (ValueError, OSError) as exc:
        raise UsageError(str(exc)) from exc


def _expansion_config(args) -> ExpansionConfig:
    try:
        return ExpansionConfig(
            max_depth=args.max_depth,
            strategy=FROZEN if args.freeze else RECURSIVE,
            grounding=_grounding(args),
            subtask_template=args.subtask_template,
            parallelism=args.parallelism,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _encoder(args):
    try:
        return get_encoder(args.encoder)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _backend(args):
    if args.backend == "mock":
        return MockBackend(model=args.model)
    if args.backend == "http":
        return HttpBackend(model=args.model, endpoint=args.endpoint, api_key_env=args.api_key_env)
    fixtures = args.fixtures or transcript_fixtures_dir()
    replay = ReplayBackend(ReplayStore(fixtures), model=args.model)
    if args.backend == "replay+mock":
        return ChainBackend(replay, MockBackend(model=args.model))
    return replay


def _kb_path(args) -> Path:
    return Path(args.kb) if args.kb else toy_kb_path()


def _load_kb(args, encoder=None):
    path = _kb_path(args)
    try:
        return kb.load_base(path, encoder)
    except OSError as exc:
        raise KnowledgeBaseError(f"cannot read {path}: {exc.strerror or exc}") from exc


def _read_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc.msg})") from exc


def _load_tree(path: str):
    """A tree JSON, or a task JSON (with "phases") converted to its 3-layer tree."""
    data = _read_json(path)
    if "phases" in data:
        return to_tree(PhaseStepTask.from_dict(data)), data.get("description", "")
    return bt_core.from_dict(data), ""


def _load_source(spec: str, args) -> PhaseStepTask:
    """Source task from a task JSON path, a bundled task name or a knowledge-base id."""
    if Path(spec).is_file():
        return PhaseStepTask.from_dict(_read_json(spec))
    if spec in bundled_task_names():
        return load_task(spec)
    for entry in _load_kb(args):
        if entry.id == spec:
            return entry.task
    raise UsageError(f"unknown source task {spec!r}")


def _metrics_dict(tree) -> dict:
    m = structure_metrics(tree)
    return {
        "n_min": m.n_min,
        "n_max": m.n_max,
        "ratio": m.ratio,
        "n_total": m.n_total,
        "n_mate": count_part_mating(tree, MatingLexicon()),
    }


def _require_out(args) -> Path:
    if not args.out:
        raise UsageError("--out is required for this command")
    return Path(args.out)


# -- subcommands -----------------------------------------------------------

def cmd_generate(args) -> int:
    encoder = _encoder(args)
    config = _expansion_config(args)
    out = _require_out(args)
    try:
        target = TargetSpec(args.target, tool=args.tool, phase_count=args.phases)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    base = _load_kb(args, encoder)
    entry, score = kb.select_source(args.target, base, encoder)
    log.info("selected source %s (%.4f)", entry.id, score)

    backend = _backend(args)
    prompt = build_prompt(entry.task, target).full_text
    completion = complete(prompt, config.params, backend)
    task = parse_completion(completion, expected=args.phases, description=args.target)
    initial = to_tree(task)
    final, trace = expand_tree(initial, config, entry.task, backend, encoder)

    _write(out / "prompts" / "generate.txt", prompt)
    _write(out / "completions" / "generate.txt", completion)
    _write(out / "initial_tree.json", bt_core.dumps(initial) + "\n")
    _write(out / "tree.json", bt_core.dumps(final) + "\n")
    _write(out / "tree.dot", bt_core.render_dot(final))
    _write(out / "trace.jsonl", trace.to_jsonl())
    artifacts = {"tree_json": "tree.json", "tree_dot": "tree.dot", "initial_tree": "initial_tree.json", "trace": "trace.jsonl"}
    if args.figure:
        from .reporting import plot_tree

        plot_tree(final, out / "tree.png")
        artifacts["tree_png"] = "tree.png"

    manifest = {
        "created_at": dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds"),
        "target": {
            "core_phrase": target.core_phrase,
            "tool": target.tool,
            "phase_count": target.phase_count,
            "verb_restriction": list(target.verb_restriction) if target.verb_restriction else None,
        },
        "kb_path": str(_kb_path(args)),
        "backend": getattr(backend, "kind", args.backend),
        "model": args.model,
        "encoder": fingerprint(encoder),
        "params": config.params.to_dict(),
        "source": {"id": entry.id, "category": entry.category, "score": round(score, 12)},
        "generation": {
            "prompt_key": prompt_key(prompt, config.params, backend.model),
            "prompt_path": "prompts/generate.txt",
            "prompt_sha256": _sha(prompt),
            "completion_path": "completions/generate.txt",
            "completion_sha256": _sha(completion),
            "phase_sizes": task.phase_sizes,
        },
        "expansion": {
            "strategy": config.strategy,
            "max_depth": config.max_depth,
            "threshold": config.grounding.threshold,
            "verbs": list(config.grounding.verb_list.verbs),
            "expanded": [{"subtask": r.subtask, "depth": r.depth, "prompt_key": r.prompt_key,
                          "completion_sha256": _sha(r.completion), "step_count": r.step_count}
                         for r in trace.expanded],
            "exceeded": [e.subtask for e in trace.exceeded],
        },
        "artifacts": artifacts,
        "metrics": _metrics_dict(final),
    }
    _write(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True, ensure_ascii=False) + "\n")
    m = manifest["metrics"]
    print(f"source={entry.id} score={score:.4f} n_total={m['n_total']} R={m['ratio']:.3f} out={out}")
    if trace.exceeded:
        for exc in trace.exceeded:
            print(f"error[expansion]: {exc}", file=sys.stderr)
        return EXIT_EXPANSION
    return 0


def cmd_expand(args) -> int:
    encoder = _encoder(args)
    config = _expansion_config(args)
    tree, _ = _load_tree(args.tree)
    source = _load_source(args.source, args)
    final, trace = expand_tree(tree, config, source, _backend(args), encoder)
    text = bt_core.dumps(final) + "\n"
    if args.out:
        out = Path(args.out)
        _write(out / "tree.json", text)
        _write(out / "trace.jsonl", trace.to_jsonl())
    else:
        sys.stdout.write(text)
    for exc in trace.exceeded:
        print(f"error[expansion]: {exc}", file=sys.stderr)
    return EXIT_EXPANSION if trace.exceeded else 0


def cmd_retrieve(args) -> int:
    encoder = _encoder(args)
    ranking = kb.rank_sources(args.target, _load_kb(args, encoder), encoder)
    for entry, score in ranking if args.all else ranking[:1]:
        print(f"{entry.id}\t{score:.4f}\t{entry.category}")
    return 0


def cmd_metrics(args) -> int:
    tree, _ = _load_tree(args.tree)
    m = _metrics_dict(tree)
    if args.json:
        print(json.dumps(m, sort_keys=True))
    else:
        print(f"R={m['ratio']:.3f} N_total={m['n_total']} N_min={m['n_min']} N_max={m['n_max']} N_mate={m['n_mate']}")
    return 0


def cmd_render(args) -> int:
    tree, description = _load_tree(args.tree)
    if args.format == "dot":
        sys.stdout.write(bt_core.render_dot(tree))
    elif args.format == "json":
        sys.stdout.write(bt_core.dumps(tree) + "\n")
    elif args.format == "phase-step":
        sys.stdout.write(build_prompt(from_tree(tree, description), "...").full_text.split("\n\nTarget Task")[0] + "\n")
    else:
        from .reporting import plot_tree

        path = _require_out(args)
        if path.suffix != ".png":
            path = path / "tree.png"
        path.parent.mkdir(parents=True, exist_ok=True)
        print(plot_tree(tree, path))
    return 0


def cmd_kb_list(args) -> int:
    for entry in _load_kb(args):
        sizes = "->".join(str(n) for n in entry.task.phase_sizes)
        print(f"{entry.id}\t{entry.category}\t{entry.task.description}\t({sizes})")
    return 0


def cmd_kb_add(args) -> int:
    if not args.kb:
        raise UsageError("kb add needs an explicit --kb file to modify")
    path = Path(args.kb)
    entries = _load_kb(args) if path.exists() else []
    data = _read_json(args.task)
    try:
        task = PhaseStepTask.from_dict(data)
    except (KeyError, ValueError) as exc:
        raise SchemaError(args.task, f"invalid task ({exc})") from exc
    entry = kb.KBEntry(args.id, args.category or "", task)
    if args.embed:
        entry = kb.ensure_embeddings([entry], _encoder(args))[0]
    kb.save_base(kb.add_entry(entries, entry), path)
    print(f"added {args.id} to {path}")
    return 0


def _variant(spec: str, args) -> PromptVariant:
    name, _, path = spec.partition("=")
    key = name.lower()
    if not path:
        if key == "ps-none":
            return PromptVariant("PS-none")
        if key in ("ps-wheel", "ps-desktop"):
            return PromptVariant(name if name != key else key.replace("ps-", "PS-"), load_task(key.replace("-", "_")))
        path = name
        name = Path(name).stem
    return PromptVariant(name, _load_source(path, args))


def cmd_ablation(args) -> int:
    out = _require_out(args)
    try:
        lines = Path(args.targets_file).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read {args.targets_file}: {exc.strerror or exc}") from exc
    targets = [t.strip() for t in lines if t.strip() and not t.lstrip().startswith("#")]
    variants = [_variant(v, args) for v in args.variants]
    if not targets:
        raise UsageError("targets file has no descriptions")
    result = run_ablation(variants, targets, _backend(args), lexicon=MatingLexicon(), parallelism=args.parallelism)
    _write(out / "samples.csv", samples_csv(result.samples))
    _write(out / "summary.csv", summary_csv(result.rows))
    if result.rows and not args.no_plot:
        from .reporting import plot_ablation

        plot_ablation(result.rows, out / "ablation.png")
    sys.stdout.write(summary_csv(result.rows))
    return 0


def cmd_record(args) -> int:
    if args.prompt_file:
        try:
            prompt = Path(args.prompt_file).read_text(encoding="utf-8")
        except OSError as exc:
            raise UsageError(f"cannot read {args.prompt_file}: {exc.strerror or exc}") from exc
    elif args.prompt:
        prompt = args.prompt
    else:
        raise UsageError("record needs --prompt or --prompt-file")
    if args.backend not in ("http", "mock"):
        raise UsageError("record needs a live (http) or mock backend")
    store = ReplayStore(args.store, write_path=args.store)
    text = complete(prompt, GenerationParams(), RecordingBackend(_backend(args), store))
    sys.stdout.write(text + "\n")
    return 0


# -- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="btgen", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="run the full retrieve/prompt/ground/expand pipeline")
    p.add_argument("--target", required=True, help="target-task description, e.g. 'Desktop assembly'")
    p.add_argument("--tool")
    p.add_argument("--phases", type=int)
    p.add_argument("--figure", action="store_true", help="also write tree.png")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("expand", parents=[common], help="expand non-primitive Actions of a tree")
    p.add_argument("--tree", required=True)
    p.add_argument("--source", required=True, help="task JSON, bundled task name or KB id")
    p.set_defaults(func=cmd_expand)

    p = sub.add_parser("retrieve", parents=[common], help="select the most similar source task")
    p.add_argument("--target", required=True)
    p.add_argument("--all", action="store_true", help="print the whole ranking")
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("metrics", parents=[common], help="structure ratio, N_total and N_mate of a tree")
    p.add_argument("--tree", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("render", parents=[common], help="render a tree as DOT, JSON, Phase-Step text or PNG")
    p.add_argument("--tree", required=True)
    p.add_argument("--format", choices=("dot", "json", "phase-step", "png"), default="dot")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("kb", parents=[common], help="inspect or extend a knowledge base")
    kb_sub = p.add_subparsers(dest="kb_command", required=True)
    q = kb_sub.add_parser("list", parents=[common])
    q.set_defaults(func=cmd_kb_list)
    q = kb_sub.add_parser("add", parents=[common])
    q.add_argument("--id", required=True)
    q.add_argument("--category")
    q.add_argument("--task", required=True, help="task JSON with description and phases")
    q.add_argument("--embed", action="store_true", help="store the embedding with the entry")
    q.set_defaults(func=cmd_kb_add)

    p = sub.add_parser("ablation", parents=[common], help="compare prompt variants over many targets")
    p.add_argument("--variants", nargs="+", default=["ps-none", "ps-wheel", "ps-desktop"],
                   help="ps-none, ps-wheel, ps-desktop, a task JSON path, or NAME=PATH")
    p.add_argument("--targets-file", required=True, help="one target description per line")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_ablation)

    p = sub.add_parser("record", parents=[common], help="complete a prompt live and store it for replay")
    p.add_argument("--prompt")
    p.add_argument("--prompt-file")
    p.add_argument("--store", required=True, help="replay JSON-lines file to append to")
    p.set_defaults(func=cmd_record)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except BTGenError as exc:
        message = " ".join(str(exc).split())
        print(f"error[{exc.category}]: {type(exc).__name__}: {message}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
