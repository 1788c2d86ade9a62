"""Per-bug derived facts shared by analyzers, the memory builder and training export."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..diffs import LocalityLevel, diff_size, locality_between, parse_unified_diff
from ..errors import DiffParseError, DifficultyError, LocalityError
from ..models import BugRecord, CrashInstance
from ..rules import DEFAULT_RULES, REVISION_CATEGORIES, RuleSet
from .classify import classify_bug_text, classify_revision_reasons, detect_fix_patterns, is_substantive_feedback
from .difficulty import DifficultyScore, score_difficulty


@dataclass
class BugFacts:
    bug_id: str
    bug_type: str
    frames: list[tuple[str, str]] = field(default_factory=list)
    fix_patterns: list[str] = field(default_factory=list)
    fixed_files: list[str] = field(default_factory=list)
    patch_lines: int | None = None
    files: int | None = None
    locality: LocalityLevel | None = None
    difficulty: DifficultyScore | None = None
    revisions: int = 0
    revision_categories: list[str] = field(default_factory=list)
    category_counts: dict[str, int] = field(default_factory=dict)
    has_external_feedback: bool = False
    v1_size: int | None = None
    days_to_fix: float | None = None
    has_c_repro: bool = False


def primary_crash(bug: BugRecord) -> CrashInstance | None:
    for crash in bug.crash_instances:
        if crash.stack_frames:
            return crash
    return bug.crash_instances[0] if bug.crash_instances else None


def _size(diff_text: str) -> tuple[int, int] | None:
    try:
        return diff_size(parse_unified_diff(diff_text))
    except DiffParseError:
        return None


def bug_facts(bug: BugRecord, rules: RuleSet = DEFAULT_RULES) -> BugFacts:
    crash = primary_crash(bug)
    facts = BugFacts(
        bug_id=bug.bug_id,
        bug_type=classify_bug_text(crash.crash_title if crash else bug.title, crash.report_text if crash else "", rules),
        frames=list(crash.stack_frames) if crash else [],
        has_c_repro=any(c.reproducer_c for c in bug.crash_instances),
        days_to_fix=bug.days_to_fix,
    )
    if bug.series is not None:
        facts.revisions = len(bug.series.versions)
        first = bug.series.versions[0]
        if first.diff_text:
            s = _size(first.diff_text)
            facts.v1_size = s[0] if s else None
        counts: dict[str, int] = {}
        for v in bug.series.versions[:-1]:
            for m in v.review_messages:
                if not is_substantive_feedback(m, v.submission_message.subject, rules):
                    continue
                facts.has_external_feedback = True
                for cat in classify_revision_reasons(m.body, rules):
                    counts[cat] = counts.get(cat, 0) + 1
        facts.category_counts = {c: counts[c] for c in REVISION_CATEGORIES if c in counts}
        facts.revision_categories = list(facts.category_counts)
    if bug.merged_fix is not None:
        try:
            files = parse_unified_diff(bug.merged_fix.diff_text)
        except DiffParseError:
            files = None
        if files is not None:
            facts.patch_lines, facts.files = diff_size(files)
            facts.fixed_files = [f.path for f in files]
            facts.fix_patterns = detect_fix_patterns(bug.merged_fix, rules)
            if facts.frames:
                try:
                    facts.locality = locality_between(facts.frames, files, rules.subsystems)
                except LocalityError:
                    facts.locality = None
        if facts.revisions == 0:
            facts.revisions = 1
        try:
            facts.difficulty = score_difficulty(
                {
                    "patch_lines": facts.patch_lines,
                    "files": facts.files,
                    "revisions": facts.revisions,
                    "locality": facts.locality,
                    "days_to_fix": facts.days_to_fix,
                    "has_c_repro": facts.has_c_repro,
                },
                rules,
            )
        except DifficultyError:
            facts.difficulty = None
    return facts
