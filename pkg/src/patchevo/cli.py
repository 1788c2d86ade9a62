"""Command-line entry point.

Exit codes: 0 success, 1 input error (bad flags, unreadable or malformed
input), 2 internal or transport error.

Environment fallbacks for flags:
  PATCHEVO_RULES_DIR         --rules-dir
  PATCHEVO_ADVISOR_ENDPOINT  --advisor-endpoint
  PATCHEVO_CODER_ENDPOINT    --coder-endpoint
  PATCHEVO_API_KEY           API key sent to both endpoints
  PATCHEVO_BUILD_CMD         --build-cmd
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .advisor import (
    DEFAULT_MAX_ROUNDS,
    AdvisorInput,
    advise,
    assemble_coder_prompt,
    build_training_pairs,
    export_training,
    parse_summary,
    repair_loop,
)
from .analyzers import IMPLEMENTED, REGISTRY, run_analyzers
from .clients import (
    BuildOutcome,
    CannedCompletionClient,
    CommandBuildRunner,
    HttpCompletionClient,
    ScriptedBuildRunner,
    env_or,
)
from .corpus import ingest_mbox, ingest_syzbot_export, link_corpus, load_corpus, read_commits, save_corpus
from .errors import AdvisorParseError, InputError, PatchevoError
from .evaluation import derive_ground_truth, read_labels, read_predictions, score_predictions, write_labels
from .memory import DEFAULT_BUDGET, DEFAULT_K, build_memory, format_context_block, load_memory, retrieve_context, save_memory
from .reports import render_result
from .rules import RuleSet

log = logging.getLogger("patchevo")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def _rules(args) -> RuleSet:
    return RuleSet.load(env_or(args.rules_dir, "PATCHEVO_RULES_DIR"))


def _canned(path: str) -> CannedCompletionClient:
    """A JSON file holding one completion string or a list of them."""
    try:
        data = json.loads(_read_text(path))
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON: {exc.msg}") from exc
    if isinstance(data, str):
        data = [data]
    if not isinstance(data, list) or not data or not all(isinstance(x, str) for x in data):
        raise InputError(f"{path}: expected a completion string or a non-empty list of strings")
    return CannedCompletionClient(data)


def _client(canned: str | None, endpoint: str | None, env_name: str, what: str):
    if canned:
        return _canned(canned)
    url = env_or(endpoint, env_name)
    if not url:
        raise InputError(f"no {what} configured: pass --{what}-canned or --{what}-endpoint (or set {env_name})")
    return HttpCompletionClient(url, os.environ.get("PATCHEVO_API_KEY"))


def _write(path: str | None, text: str) -> None:
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _context_for(args, report: str, rules: RuleSet) -> str:
    if not getattr(args, "memory", None):
        return ""
    store = load_memory(args.memory)
    return format_context_block(retrieve_context(store, report, k=args.k, rules=rules), args.budget)


# subcommands


def cmd_ingest(args) -> int:
    bugs = []
    for path in args.export or []:
        bugs.extend(ingest_syzbot_export(path))
    messages = []
    for path in (args.mbox or []) + (args.patchwork or []):
        messages.extend(ingest_mbox(path))
    fixes = {}
    for path in args.commits or []:
        for h, fix in read_commits(path).items():
            fixes.setdefault(h, fix)
    corpus = link_corpus(bugs, messages, fixes)
    save_corpus(corpus, args.out)
    linked = sum(b.series is not None for b in corpus.bugs)
    print(f"ingested {len(corpus.bugs)} bugs, {len(corpus.messages)} messages, {len(fixes)} commits; "
          f"{linked} bugs linked to a patch series", file=sys.stderr)
    return 0


def cmd_analyze(args) -> int:
    corpus = load_corpus(args.corpus)
    ids = list(IMPLEMENTED) if args.analyzers == ["all"] else args.analyzers
    results = run_analyzers(corpus, ids, _rules(args))
    out_dir = Path(args.out_dir) if args.out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    for r in results:
        text = render_result(r)
        if out_dir:
            (out_dir / f"{r.name}.json").write_text(r.to_json(), encoding="utf-8")
            (out_dir / f"{r.name}.txt").write_text(text, encoding="utf-8")
        sys.stdout.write(text)
    return 0


def cmd_build_memory(args) -> int:
    store = build_memory(load_corpus(args.corpus), _rules(args))
    save_memory(store, args.out)
    print(f"memory: {len(store.entries)} entries, {len(store.strategies)} strategies, "
          f"{len(store.lessons)} lessons, {store.excluded} bugs excluded (no merged fix); "
          f"embedder: {store.embedder_name}", file=sys.stderr)
    return 0


def cmd_retrieve(args) -> int:
    report = _read_text(args.report)
    store = load_memory(args.memory)
    ctx = retrieve_context(store, report, k=args.k, rules=_rules(args))
    sys.stdout.write(format_context_block(ctx, args.budget))
    return 0


def cmd_advise(args) -> int:
    rules = _rules(args)
    report = _read_text(args.report)
    patch = _read_text(args.patch) if args.patch else None
    inp = AdvisorInput(report, patch, _context_for(args, report, rules))
    client = _client(args.advisor_canned, args.advisor_endpoint, "PATCHEVO_ADVISOR_ENDPOINT", "advisor")
    summary = advise(inp, client)
    record = {
        "root_cause_direction": summary.root_cause_direction,
        "repair_constraints": summary.repair_constraints,
        "patch_strategy": summary.patch_strategy,
        "pitfalls": summary.pitfalls,
    }
    _write(args.out, json.dumps(record, indent=1, ensure_ascii=False) + "\n")
    return 0


def _build_runner(args):
    if args.build_script:
        steps = []
        for tok in args.build_script.split(","):
            tok = tok.strip().lower()
            if tok not in ("ok", "fail", "fatal"):
                raise InputError(f"--build-script entries must be ok, fail or fatal, got {tok!r}")
            steps.append(BuildOutcome(tok == "ok", "" if tok == "ok" else f"scripted build {tok}", tok == "fatal"))
        return ScriptedBuildRunner(steps)
    cmd = env_or(args.build_cmd, "PATCHEVO_BUILD_CMD")
    if not cmd:
        raise InputError("no build runner configured: pass --build-cmd or --build-script (or set PATCHEVO_BUILD_CMD)")
    return CommandBuildRunner(cmd)


def cmd_repair(args) -> int:
    rules = _rules(args)
    report = _read_text(args.report)
    patch = _read_text(args.patch) if args.patch else None
    context = _context_for(args, report, rules)
    if args.summary:
        try:
            summary = parse_summary(_read_text(args.summary))
        except AdvisorParseError as exc:
            # a user-supplied summary file is input, not model output
            raise InputError(f"{args.summary}: {exc}") from exc
    else:
        client = _client(args.advisor_canned, args.advisor_endpoint, "PATCHEVO_ADVISOR_ENDPOINT", "advisor")
        summary = advise(AdvisorInput(report, patch, context), client)
    coder = _client(args.coder_canned, args.coder_endpoint, "PATCHEVO_CODER_ENDPOINT", "coder")
    prompt = assemble_coder_prompt(report, patch, context, summary)
    session = repair_loop(prompt, coder, _build_runner(args), args.max_rounds, worktree=args.worktree, workdir=args.workdir)
    _write(args.out, session.transcript())
    print(f"repair: {session.status} after {len(session.rounds)} round(s)", file=sys.stderr)
    return 0


def cmd_export_training(args) -> int:
    rules = _rules(args)
    corpus = load_corpus(args.corpus)
    memory = load_memory(args.memory) if args.memory else None
    pairs, skipped = build_training_pairs(corpus, rules, memory, args.budget)
    export_training(pairs, args.out)
    skips = ", ".join(f"{k}={v}" for k, v in sorted(skipped.items())) or "none"
    print(f"exported {len(pairs)} training pairs; skipped: {skips}", file=sys.stderr)
    return 0


def cmd_labels(args) -> int:
    corpus = load_corpus(args.corpus)
    cases = {b.bug_id: corpus.threads_for(b) for b in corpus.bugs if b.thread_ids}
    labels = derive_ground_truth(cases, _rules(args))
    write_labels(labels, args.out)
    print(f"wrote labels for {len(labels)} cases", file=sys.stderr)
    return 0


def cmd_evaluate(args) -> int:
    scores = score_predictions(read_predictions(args.predictions), read_labels(args.labels))
    if args.json:
        sys.stdout.write(json.dumps(scores.to_dict(), sort_keys=True) + "\n")
        return 0
    dcr = "n/a" if scores.dcr is None else f"{scores.dcr:.3f}"
    print(f"cases     {scores.case_count}")
    print(f"precision {scores.precision:.3f}")
    print(f"recall    {scores.recall:.3f}")
    print(f"F1        {scores.f1:.3f}")
    print(f"DCR       {dcr}")
    print(f"macro (per-case average, not the headline figure): P {scores.macro_precision:.3f} "
          f"R {scores.macro_recall:.3f} F1 {scores.macro_f1:.3f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="patchevo", description="Mine kernel bug-fix evolution and drive memory-guided repair.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--rules-dir", help="directory of rule-table overrides")
        p.set_defaults(func=func)
        return p

    def add_memory_opts(p, required=False):
        p.add_argument("--memory", required=required, help="memory store file")
        p.add_argument("-k", type=int, default=DEFAULT_K, help="similar bugs to retrieve")
        p.add_argument("--budget", type=int, default=DEFAULT_BUDGET, help="context block size in characters")

    p = add("ingest", cmd_ingest, "ingest syzbot exports, mbox archives and commits into a corpus file")
    p.add_argument("--export", action="append", help="syzbot export (JSON lines)")
    p.add_argument("--mbox", action="append", help="mailing-list mbox archive")
    p.add_argument("--patchwork", action="append", help="patchwork mbox download (deduplicated by Message-ID)")
    p.add_argument("--commits", action="append", help="fix commits (JSON lines)")
    p.add_argument("--out", required=True)

    p = add("analyze", cmd_analyze, "run analyzers and write reports")
    p.add_argument("--corpus", required=True)
    p.add_argument("--analyzers", nargs="+", default=["all"], help=f"ids or 'all'; registered: {', '.join(sorted(REGISTRY))}")
    p.add_argument("--out-dir")

    p = add("build-memory", cmd_build_memory, "build the repair memory from a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)

    p = add("retrieve", cmd_retrieve, "print the context block for a crash report")
    p.add_argument("--report", required=True)
    add_memory_opts(p, required=True)

    p = add("advise", cmd_advise, "ask the advisor for a diagnostic summary")
    p.add_argument("--report", required=True)
    p.add_argument("--patch")
    p.add_argument("--advisor-endpoint")
    p.add_argument("--advisor-canned", help="JSON file with canned advisor completions")
    p.add_argument("--out")
    add_memory_opts(p)

    p = add("repair", cmd_repair, "run the compile-feedback repair loop")
    p.add_argument("--report", required=True)
    p.add_argument("--patch")
    p.add_argument("--summary", help="use this advisor summary text instead of calling the advisor")
    p.add_argument("--advisor-endpoint")
    p.add_argument("--advisor-canned")
    p.add_argument("--coder-endpoint")
    p.add_argument("--coder-canned", help="JSON file with canned coder completions")
    p.add_argument("--build-cmd", help="shell command; {patch} and {worktree} are substituted")
    p.add_argument("--build-script", help="stub build outcomes, e.g. fail,fail,ok")
    p.add_argument("--max-rounds", type=int, default=DEFAULT_MAX_ROUNDS)
    p.add_argument("--worktree", default=".")
    p.add_argument("--workdir", help="keep round patches here")
    p.add_argument("--out", help="transcript file (default: stdout)")
    add_memory_opts(p)

    p = add("export-training", cmd_export_training, "export code-free advisor training pairs")
    p.add_argument("--corpus", required=True)
    p.add_argument("--memory")
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--out", required=True)

    p = add("labels", cmd_labels, "derive review-category labels from each bug's threads")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)

    p = add("evaluate", cmd_evaluate, "score predicted categories against labels")
    p.add_argument("--predictions", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--json", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"patchevo: error: {exc}", file=sys.stderr)
        return 1
    except (PatchevoError, NotImplementedError) as exc:
        print(f"patchevo: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"patchevo: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
