from __future__ import annotations

import json
import subprocess
import sys

import pytest

from conftest import FIXTURES
from helpers import simple_diff
from patchevo.advisor import GUARD_PREAMBLE
from patchevo.cli import main
from patchevo.corpus import load_corpus
from patchevo.evaluation import read_labels
from patchevo.memory import load_memory

SUMMARY = """Root-cause direction: The tunnel is published before it is initialized.
Repair constraints:
- Keep the socket lock rules unchanged.
Patch strategy: Reorder setup so publication comes last.
Pitfalls:
- Avoid a new lock ordering.
"""
PATCH = simple_diff("net/l2tp/l2tp_core.c", 2, 0, func="l2tp_tunnel_register")


def _ingest(tmp_path):
    out = tmp_path / "corpus.jsonl"
    rc = main(["ingest", "--export", str(FIXTURES / "syzbot_export.jsonl"), "--mbox", str(FIXTURES / "threads.mbox"),
               "--commits", str(FIXTURES / "commits.jsonl"), "--out", str(out)])
    assert rc == 0
    return out


@pytest.fixture
def corpus_file(tmp_path):
    return _ingest(tmp_path)


@pytest.fixture
def memory_file(tmp_path, corpus_file):
    out = tmp_path / "memory.jsonl"
    assert main(["build-memory", "--corpus", str(corpus_file), "--out", str(out)]) == 0
    return out


def test_ingest_writes_linked_corpus(corpus_file, capsys):
    corpus = load_corpus(corpus_file)
    assert len(corpus.bugs) == 3 and sum(b.series is not None for b in corpus.bugs) == 3


def test_patchwork_input_is_deduplicated(tmp_path):
    out = tmp_path / "c.jsonl"
    mbox = str(FIXTURES / "threads.mbox")
    assert main(["ingest", "--mbox", mbox, "--patchwork", mbox, "--out", str(out)]) == 0
    assert load_corpus(out).messages == load_corpus(_ingest(tmp_path)).messages


def test_analyze_bug_type(tmp_path, corpus_file, capsys):
    out_dir = tmp_path / "reports"
    assert main(["analyze", "--corpus", str(corpus_file), "--analyzers", "bug_type", "--out-dir", str(out_dir)]) == 0
    data = json.loads((out_dir / "bug_type.json").read_text())
    assert len(data["details"]) == 3
    assert "[bug_types]" in capsys.readouterr().out
    assert (out_dir / "bug_type.txt").exists()


def test_analyze_all(corpus_file, capsys):
    assert main(["analyze", "--corpus", str(corpus_file)]) == 0
    out = capsys.readouterr().out
    assert "== patch_evolution ==" in out and "== difficulty ==" in out


def test_extension_analyzer_is_internal_error(corpus_file, capsys):
    assert main(["analyze", "--corpus", str(corpus_file), "--analyzers", "backport_downstream"]) == 2
    assert "error" in capsys.readouterr().err


def test_unknown_analyzer_is_input_error(corpus_file):
    assert main(["analyze", "--corpus", str(corpus_file), "--analyzers", "nope"]) == 1


def test_usage_errors_exit_1(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["analyze", "--bogus"])
    assert exc.value.code == 1 and "usage" in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 1


def test_missing_file_exit_1(tmp_path):
    assert main(["analyze", "--corpus", str(tmp_path / "none.jsonl")]) == 1
    assert main(["retrieve", "--report", str(tmp_path / "none.txt"), "--memory", str(tmp_path / "m")]) == 1


def test_retrieve_lists_own_bug_first(tmp_path, memory_file, capsys):
    store = load_memory(memory_file)
    for entry in store.entries:
        report = tmp_path / f"{entry.bug_id}.txt"
        report.write_text(entry.crash_report)
        capsys.readouterr()
        assert main(["retrieve", "--report", str(report), "--memory", str(memory_file), "-k", "3"]) == 0
        out = capsys.readouterr().out
        first = next(l for l in out.splitlines() if l.startswith("- "))
        assert first.startswith(f"- {entry.bug_id} ")


def test_advise_with_canned_client(tmp_path, memory_file, capsys):
    report = tmp_path / "r.txt"
    report.write_text(load_memory(memory_file).entries[0].crash_report)
    canned = tmp_path / "a.json"
    canned.write_text(json.dumps(SUMMARY))
    out = tmp_path / "summary.json"
    assert main(["advise", "--report", str(report), "--advisor-canned", str(canned), "--memory", str(memory_file),
                 "--out", str(out)]) == 0
    rec = json.loads(out.read_text())
    assert rec["patch_strategy"].startswith("Reorder") and len(rec["pitfalls"]) == 1


def test_advise_without_client_is_input_error(tmp_path, monkeypatch):
    monkeypatch.delenv("PATCHEVO_ADVISOR_ENDPOINT", raising=False)
    report = tmp_path / "r.txt"
    report.write_text("WARNING in foo\n")
    assert main(["advise", "--report", str(report)]) == 1


def test_advise_endpoint_from_environment(tmp_path, monkeypatch):
    # unreachable endpoint taken from the environment: a transport error, exit 2
    monkeypatch.setenv("PATCHEVO_ADVISOR_ENDPOINT", "http://127.0.0.1:9/")
    report = tmp_path / "r.txt"
    report.write_text("WARNING in foo\n")
    assert main(["advise", "--report", str(report)]) == 2


def _repair_args(tmp_path, script="fail,fail,ok"):
    report = tmp_path / "r.txt"
    report.write_text("WARNING: possible circular locking dependency detected\n")
    summary = tmp_path / "s.txt"
    summary.write_text(SUMMARY)
    coder = tmp_path / "coder.json"
    coder.write_text(json.dumps([f"```diff\n{PATCH}```"]))
    out = tmp_path / "transcript.json"
    args = ["repair", "--report", str(report), "--summary", str(summary), "--coder-canned", str(coder),
            "--build-script", script, "--out", str(out)]
    return args, out


def test_repair_dry_run(tmp_path):
    args, out = _repair_args(tmp_path)
    assert main(args) == 0
    t = json.loads(out.read_text())
    assert t["status"] == "fixed_candidate" and len(t["rounds"]) == 3 and t["final_patch"] == PATCH
    assert all(GUARD_PREAMBLE in r["prompt"] for r in t["rounds"])


def test_repair_build_cmd_from_environment(tmp_path, monkeypatch):
    args, out = _repair_args(tmp_path)
    i = args.index("--build-script")
    del args[i:i + 2]
    monkeypatch.setenv("PATCHEVO_BUILD_CMD", "test -s {patch}")
    assert main(args) == 0
    assert json.loads(out.read_text())["status"] == "fixed_candidate"
    monkeypatch.delenv("PATCHEVO_BUILD_CMD")
    assert main(args) == 1


def test_repair_bad_script_and_bad_canned(tmp_path):
    args, _ = _repair_args(tmp_path, "fail,maybe")
    assert main(args) == 1
    args, _ = _repair_args(tmp_path)
    (tmp_path / "coder.json").write_text("{}")
    assert main(args) == 1


def test_repair_bad_summary_exit_1(tmp_path):
    args, _ = _repair_args(tmp_path)
    (tmp_path / "s.txt").write_text("Root-cause direction: x\n")
    assert main(args) == 1


def test_export_training(tmp_path, corpus_file, memory_file, capsys):
    out = tmp_path / "train.jsonl"
    assert main(["export-training", "--corpus", str(corpus_file), "--memory", str(memory_file), "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 2
    assert "single_version=1" in capsys.readouterr().err


def test_labels_then_evaluate(tmp_path, corpus_file, capsys):
    labels = tmp_path / "labels.jsonl"
    assert main(["labels", "--corpus", str(corpus_file), "--out", str(labels)]) == 0
    assert {l.case_id for l in read_labels(labels)} == {"1c8ff72d", "0438378d", "94cc2a66"}
    capsys.readouterr()
    assert main(["evaluate", "--predictions", str(labels), "--labels", str(labels)]) == 0
    out = capsys.readouterr().out
    assert "F1        1.000" in out
    assert main(["evaluate", "--predictions", str(labels), "--labels", str(labels), "--json"]) == 0
    assert json.loads(capsys.readouterr().out)["f1"] == 1.0


def test_evaluate_mismatch_is_input_error(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    a.write_text('{"case_id": "x", "categories": []}\n')
    b.write_text('{"case_id": "y", "categories": []}\n')
    assert main(["evaluate", "--predictions", str(a), "--labels", str(b)]) == 1


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "patchevo", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("patchevo ")
