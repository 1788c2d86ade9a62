"""Advisor inputs and summaries, code-free training export, and the coder repair loop."""

from __future__ import annotations

import json
import re
import tempfile
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable

from .analyzers.classify import classify_revision_reasons
from .analyzers.facts import bug_facts, primary_crash
from .clients import DEFAULT_MAX_TOKENS, DEFAULT_TEMPERATURE, BuildOutcome, BuildRunner, CompletionClient
from .diffs import locality_between, parse_unified_diff
from .errors import AdvisorParseError, CodeFreeViolation, DiffParseError, InputError, LocalityError
from .memory import LESSON_GUIDANCE, MemoryStore, format_context_block, retrieve_context
from .models import Corpus
from .rules import DEFAULT_RULES, RuleSet

PROMPT_BUDGET = 32000
DEFAULT_MAX_ROUNDS = 3

GUARD_PREAMBLE = (
    "RULES FOR THIS TASK: Do not look up, fetch or consult upstream kernel commits, "
    "mailing-list archives (LKML, lore.kernel.org, patchwork) or the syzbot dashboard "
    "for this bug. Work only from the material given below."
)

SECTION_LABELS = (
    ("root_cause_direction", "Root-cause direction"),
    ("repair_constraints", "Repair constraints"),
    ("patch_strategy", "Patch strategy"),
    ("pitfalls", "Pitfalls"),
)
LIST_FIELDS = ("repair_constraints", "pitfalls")

ADVISOR_INSTRUCTIONS = (
    "You are a kernel repair advisor. Read the crash report, the candidate patch and the "
    "repair context, then write a short diagnostic summary with exactly these labeled "
    "sections: Root-cause direction, Repair constraints, Patch strategy, Pitfalls. Say "
    "whether the crash site is likely the repair site. Do not write code or diffs."
)

REVISION_INSTRUCTION = (
    "The build failed with the output above. Revise the patch so that it builds, keep the "
    "repair specification, and reply with one complete unified diff."
)

CODER_TASK = (
    "Produce one unified diff in git format (starting with 'diff --git') that repairs the crash "
    "and follows the repair specification."
)

_LABEL_RE = re.compile(
    r"^[\s#*_]*(" + "|".join(re.escape(label) for _, label in SECTION_LABELS) + r")[\s*_]*:[\s*_]*(.*)$",
    re.IGNORECASE,
)
_BULLET_RE = re.compile(r"^\s*(?:[*•]|-(?=\s)|\d+[.)])\s+")
_CODE_LINE_RE = re.compile(r"^(diff --git |@@ -\d|\+\+\+ |--- (a/|/dev/null)|index [0-9a-f]+\.\.[0-9a-f]+|[+-](\S|\t))")


def code_lines(text: str) -> list[str]:
    """Lines that look like diff content (hunk headers or +/- edited lines)."""
    return [l for l in (text or "").splitlines() if _CODE_LINE_RE.match(l)]


def diff_marker_lines(text: str) -> list[str]:
    """Strict training-target check: any line opening with '+', '-' or 'diff --git'."""
    return [l for l in (text or "").splitlines() if l.startswith(("+", "-", "diff --git"))]


def is_code_free(text: str) -> bool:
    return not diff_marker_lines(text)


@dataclass
class AdvisorInput:
    crash_report: str
    candidate_patch: str | None = None
    memory_context: str = ""

    def __post_init__(self):
        if not (self.crash_report or "").strip():
            raise InputError("advisor input needs a non-empty crash report")

    def render(self, budget: int = PROMPT_BUDGET) -> str:
        """Sections in fixed order; the context and then the report tail are trimmed to fit."""
        def build(report: str, context: str) -> str:
            parts = [f"## Crash report\n{report.rstrip()}\n"]
            if self.candidate_patch:
                parts.append(f"## Candidate patch\n{self.candidate_patch.rstrip()}\n")
            if context:
                parts.append(f"## Repair context\n{context.rstrip()}\n")
            return "\n".join(parts)

        text = build(self.crash_report, self.memory_context)
        if len(text) <= budget:
            return text
        text = build(self.crash_report, "")
        if len(text) <= budget:
            return text
        marker = "\n[report truncated]"
        over = len(text) - budget + len(marker)
        report = self.crash_report[: max(0, len(self.crash_report) - over)] + marker
        return build(report, "")[:budget]


@dataclass
class AdvisorSummary:
    root_cause_direction: str
    repair_constraints: list[str]
    patch_strategy: str
    pitfalls: list[str]

    def __post_init__(self):
        missing = [n for n, _ in SECTION_LABELS if not _present(getattr(self, n))]
        if missing:
            raise AdvisorParseError(f"summary is missing section(s): {', '.join(missing)}", self.render())

    def render(self) -> str:
        blocks = []
        for name, label in SECTION_LABELS:
            value = getattr(self, name)
            if name in LIST_FIELDS:
                body = "\n".join(f"* {item}" for item in value)
            else:
                body = value
            blocks.append(f"{label}:\n{body}")
        return "\n\n".join(blocks) + "\n"

    def text(self) -> str:
        """All four fields as plain text, for keyword matching."""
        return "\n".join(
            [self.root_cause_direction, *self.repair_constraints, self.patch_strategy, *self.pitfalls]
        )


def _present(value) -> bool:
    if isinstance(value, list):
        return any(v.strip() for v in value)
    return bool((value or "").strip())


def _sections(text: str) -> dict[str, list[str]]:
    by_label = {label.lower(): name for name, label in SECTION_LABELS}
    found: dict[str, list[str]] = {}
    current = None
    for line in (text or "").splitlines():
        m = _LABEL_RE.match(line)
        if m:
            current = by_label[m.group(1).lower()]
            found.setdefault(current, [])
            if m.group(2).strip():
                found[current].append(m.group(2))
        elif current is not None:
            found[current].append(line)
    return found


def missing_sections(text: str) -> list[str]:
    found = _sections(text)
    return [n for n, _ in SECTION_LABELS if not any(l.strip() for l in found.get(n, []))]


def parse_summary(text: str) -> AdvisorSummary:
    """Parse the four labeled sections; diff content anywhere is a violation."""
    bad = code_lines(text)
    if bad:
        raise CodeFreeViolation(f"advisor output contains code: {bad[0]!r}", text)
    missing = missing_sections(text)
    if missing:
        raise AdvisorParseError(f"advisor output is missing section(s): {', '.join(missing)}", text)
    found = _sections(text)
    values = {}
    for name, _ in SECTION_LABELS:
        lines = [l.rstrip() for l in found[name]]
        if name in LIST_FIELDS:
            items: list[str] = []
            for l in lines:
                if not l.strip():
                    continue
                if _BULLET_RE.match(l) or not items:
                    items.append(_BULLET_RE.sub("", l).strip())
                else:
                    items[-1] = f"{items[-1]} {l.strip()}"
            values[name] = items
        else:
            values[name] = "\n".join(lines).strip()
    return AdvisorSummary(**values)


def advisor_prompt(inp: AdvisorInput, budget: int = PROMPT_BUDGET) -> str:
    return f"{ADVISOR_INSTRUCTIONS}\n\n{inp.render(budget)}"


def advise(
    inp: AdvisorInput,
    client: CompletionClient,
    max_tokens: int = DEFAULT_MAX_TOKENS,
    temperature: float = DEFAULT_TEMPERATURE,
) -> AdvisorSummary:
    """Ask for a summary; re-prompt once if a section is missing."""
    prompt = advisor_prompt(inp)
    raw = client.complete(prompt, max_tokens=max_tokens, temperature=temperature)
    missing = missing_sections(raw)
    if not missing:
        return parse_summary(raw)
    retry = (
        f"{prompt}\n\n## Previous answer\n{raw.rstrip()}\n\n"
        f"The previous answer is missing: {', '.join(dict(SECTION_LABELS)[m] for m in missing)}. "
        "Reply again with all four labeled sections."
    )
    raw2 = client.complete(retry, max_tokens=max_tokens, temperature=temperature)
    return parse_summary(raw2)


def assemble_coder_prompt(
    crash_report: str, candidate_patch: str | None, context_block: str, summary: AdvisorSummary
) -> str:
    parts = [GUARD_PREAMBLE + "\n", f"## Crash report\n{crash_report.rstrip()}\n"]
    if candidate_patch:
        parts.append(f"## Candidate patch\n{candidate_patch.rstrip()}\n")
    parts.append(f"## Repair context\n{(context_block or '(none)').rstrip()}\n")
    parts.append(
        "## Repair specification (binding)\n"
        "Treat the following diagnosis as a binding repair specification.\n\n"
        f"{summary.render().rstrip()}\n"
    )
    parts.append(f"## Task\n{CODER_TASK}\n")
    return "\n".join(parts)


# coder output

_FENCE_RE = re.compile(r"^```[^\n]*\n(.*?)^```", re.DOTALL | re.MULTILINE)
_DIFF_LINE_RE = re.compile(
    r"^(diff --git |index |--- |\+\+\+ |@@ |[ +\-\\]|new file mode|deleted file mode|old mode|new mode|"
    r"similarity index|rename (from|to) |copy (from|to) |Binary files )"
)


def _from_diff_start(block: str) -> str | None:
    lines = block.splitlines()
    for i, l in enumerate(lines):
        if l.startswith("diff --git "):
            return "\n".join(lines[i:]).rstrip("\n") + "\n"
    return None


def _unfenced_blocks(text: str) -> list[str]:
    blocks, cur = [], None
    for line in text.splitlines():
        if line.startswith("diff --git "):
            if cur is None:
                cur = []
            cur.append(line)
        elif cur is not None and (line == "" or _DIFF_LINE_RE.match(line)):
            cur.append(line)
        elif cur is not None:
            blocks.append(cur)
            cur = None
    if cur is not None:
        blocks.append(cur)
    out = []
    for b in blocks:
        while b and b[-1] == "":
            b.pop()
        out.append("\n".join(b) + "\n")
    return out


def extract_diff_from_completion(text: str) -> tuple[str | None, list[str]]:
    """First diff block (fenced preferred) and any further blocks."""
    fenced = [d for d in (_from_diff_start(m.group(1)) for m in _FENCE_RE.finditer(text or "")) if d]
    blocks = fenced or _unfenced_blocks(text or "")
    if not blocks:
        return None, []
    return blocks[0], blocks[1:]


@dataclass
class RepairRound:
    prompt: str
    completion: str
    patch: str | None
    success: bool
    output: str
    reason: str | None = None
    extra_blocks: list[str] = field(default_factory=list)


@dataclass
class RepairSession:
    rounds: list[RepairRound] = field(default_factory=list)
    final_patch: str | None = None
    status: str = "exhausted"

    def to_dict(self) -> dict:
        return asdict(self)

    def transcript(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True, ensure_ascii=False) + "\n"


def repair_loop(
    prompt: str,
    coder: CompletionClient,
    runner: BuildRunner,
    max_rounds: int = DEFAULT_MAX_ROUNDS,
    worktree: str | Path = ".",
    workdir: str | Path | None = None,
    max_tokens: int = DEFAULT_MAX_TOKENS,
    temperature: float = DEFAULT_TEMPERATURE,
) -> RepairSession:
    """Generate, extract, build; feed build output back until success or max_rounds.

    A fatal build outcome (the tree itself cannot build) ends the session
    as compile_failed.
    """
    if max_rounds < 1:
        raise InputError("max_rounds must be at least 1")
    session = RepairSession()
    with tempfile.TemporaryDirectory(prefix="patchevo-") as tmp:
        outdir = Path(workdir) if workdir is not None else Path(tmp)
        outdir.mkdir(parents=True, exist_ok=True)
        for n in range(1, max_rounds + 1):
            completion = coder.complete(prompt, max_tokens=max_tokens, temperature=temperature)
            patch, extra = extract_diff_from_completion(completion)
            reason = None
            if patch is not None:
                try:
                    parse_unified_diff(patch)
                except DiffParseError as exc:
                    patch, reason = None, f"malformed patch: {exc}"
            else:
                reason = "no patch"
            if patch is None:
                outcome = BuildOutcome(False, f"{reason}: the response contained no usable unified diff")
            else:
                path = outdir / f"round-{n}.patch"
                path.write_text(patch, encoding="utf-8")
                outcome = runner.run(path, Path(worktree))
                if not outcome.success:
                    reason = "build failed"
            session.rounds.append(RepairRound(prompt, completion, patch, outcome.success, outcome.output, reason, extra))
            if outcome.success:
                session.final_patch, session.status = patch, "fixed_candidate"
                break
            if outcome.fatal:
                session.status = "compile_failed"
                break
            prompt = f"{prompt}\n\n## Build output (round {n})\n{outcome.output.rstrip()}\n\n{REVISION_INSTRUCTION}\n"
    return session


# training export

WHERE = {
    "same_function": "in the same function as",
    "same_file": "in the same file as",
    "same_directory": "in the same directory as",
    "same_subsystem": "elsewhere in the same subsystem as",
    "different_subsystem": "in a different subsystem from",
}

STRATEGY_PHRASES = {
    "fix-order": "reorder the existing operations so teardown and use happen in a safe order",
    "add-init": "initialize the affected state before it can be read",
    "add-null-check": "guard the access with a check for a missing object and bail out early",
    "add-lock": "take the lock that protects the shared state around the access",
    "add-bounds-check": "validate the index against the container bounds before the access",
    "fix-error-path": "repair the error path so every acquired resource is released once",
    "add-refcount": "hold a reference on the object for as long as it is used",
    "fix-lifetime": "wait for outstanding users before the object is freed",
    "revert": "back out the change that introduced the crash",
    "add-size-check": "check the supplied size against what the buffer can hold",
}


@dataclass
class TrainingPair:
    bug_id: str
    input: str
    target: str


def _files_of(diff_text: str | None):
    if not diff_text:
        return None
    try:
        return parse_unified_diff(diff_text)
    except DiffParseError:
        return None


def training_target(bug, rules: RuleSet = DEFAULT_RULES) -> AdvisorSummary:
    """Template diagnosis from structured facts about the v1 to final gap."""
    facts = bug_facts(bug, rules)
    v1 = _files_of(bug.series.versions[0].diff_text)
    final = _files_of(bug.merged_fix.diff_text) or []
    v1_lines = sum(f.added + f.removed for f in v1) if v1 else None
    final_lines = facts.patch_lines

    v1_loc = None
    if v1 and facts.frames:
        try:
            v1_loc = locality_between(facts.frames, v1, rules.subsystems)
        except LocalityError:
            v1_loc = None
    if facts.locality is None:
        direction = "The crash stack gives no usable location, so the repair site has to be derived from the object lifetime."
    elif facts.locality.value in ("same_function", "same_file"):
        direction = f"The crash site is likely the repair site: the accepted fix is {WHERE[facts.locality.value]} the crashing frames."
    else:
        direction = f"The crash site is likely not the repair site: the accepted fix is {WHERE[facts.locality.value]} the crashing frames."
    if v1_loc is not None and facts.locality is not None and v1_loc != facts.locality:
        direction += f" The first version was {WHERE[v1_loc.value]} the crash; the repair moved."

    constraints = [f"Address the {c.replace('_', ' ')} concern: {LESSON_GUIDANCE[c]}." for c in facts.revision_categories]
    if not constraints:
        constraints = ["Keep the fix confined to the crash path and preserve existing behaviour elsewhere."]

    phrases = [STRATEGY_PHRASES[p] for p in facts.fix_patterns if p in STRATEGY_PHRASES]
    strategy = (phrases[0][0].upper() + phrases[0][1:] + ".") if phrases else "Make the smallest change that removes the faulty access."
    if len(phrases) > 1:
        strategy += " Also " + "; ".join(phrases[1:]) + "."
    if v1_lines is not None and final_lines is not None:
        v1_paths = {f.path for f in v1}
        final_paths = {f.path for f in final}
        strategy += (
            f" The first version touched {v1_lines} lines in {len(v1_paths)} file(s); the accepted fix "
            f"touches {final_lines} lines in {len(final_paths)} file(s)."
        )
        added = sorted(final_paths - v1_paths)
        dropped = sorted(v1_paths - final_paths)
        if added:
            strategy += f" It also changes {', '.join(added)}."
        if dropped:
            strategy += f" It leaves {', '.join(dropped)} untouched."

    pitfalls = [
        f"Reviewers of earlier versions raised {c.replace('_', ' ')} issues; do not repeat them."
        for c in facts.revision_categories
    ]
    if len(bug.series.versions) > 2:
        pitfalls.append(f"This fix needed {len(bug.series.versions)} versions; check the whole crash path before posting.")
    if not pitfalls:
        pitfalls = ["No reviewer concern was recorded for the first version; re-check the fix against the whole crash path."]
    return AdvisorSummary(direction, constraints, strategy, pitfalls)


def build_training_pairs(
    corpus: Corpus,
    rules: RuleSet = DEFAULT_RULES,
    memory: MemoryStore | None = None,
    budget: int | None = None,
) -> tuple[list[TrainingPair], Counter]:
    """One pair per multi-version series with a merged fix; skip reasons are counted."""
    pairs, skipped = [], Counter()
    for bug in sorted(corpus.bugs, key=lambda b: b.bug_id):
        if bug.series is None:
            skipped["no_series"] += 1
            continue
        if len(bug.series.versions) < 2:
            skipped["single_version"] += 1
            continue
        if bug.merged_fix is None:
            skipped["no_merged_fix"] += 1
            continue
        crash = primary_crash(bug)
        report = (crash.report_text or crash.crash_title) if crash else bug.title
        if not (report or "").strip():
            skipped["no_crash_report"] += 1
            continue
        context = ""
        if memory is not None:
            ctx = retrieve_context(memory, report, rules=rules, exclude={bug.bug_id})
            context = format_context_block(ctx) if budget is None else format_context_block(ctx, budget)
        inp = AdvisorInput(report, bug.series.versions[0].diff_text or None, context)
        target = training_target(bug, rules).render()
        bad = diff_marker_lines(target)
        if bad:
            raise CodeFreeViolation(f"training target for {bug.bug_id} contains diff lines", target)
        pairs.append(TrainingPair(bug.bug_id, advisor_prompt(inp), target))
    return pairs, skipped


def export_training(pairs: Iterable[TrainingPair], path: str | Path) -> Path:
    path = Path(path)
    lines = [json.dumps({"input": p.input, "target": p.target}, sort_keys=True, ensure_ascii=False) for p in pairs]
    path.write_text("".join(l + "\n" for l in lines), encoding="utf-8")
    return path


def summary_categories(summary: AdvisorSummary, rules: RuleSet = DEFAULT_RULES) -> set[str]:
    return classify_revision_reasons(summary.text(), rules)

