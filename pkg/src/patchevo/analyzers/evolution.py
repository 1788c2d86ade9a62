"""Version-to-version evolution: feedback on vN against the change to vN+1."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from ..diffs import interversion_delta
from ..errors import DiffParseError
from ..models import PatchSeries
from ..rules import DEFAULT_RULES, REVISION_CATEGORIES, RuleSet
from .base import AnalysisResult, pct
from .classify import classify_revision_reasons, is_substantive_feedback


@dataclass
class VersionTransition:
    series_key: str
    from_version: int
    to_version: int
    feedback_categories: list[str] = field(default_factory=list)
    delta_lines: int | None = None
    acknowledged_categories: list[str] = field(default_factory=list)
    has_substantive_feedback: bool = False
    has_changelog: bool = False
    bug_id: str | None = None


def _ordered(cats: Iterable[str]) -> list[str]:
    cats = set(cats)
    return [c for c in REVISION_CATEGORIES if c in cats]


def build_transitions(
    series: Sequence[PatchSeries],
    bug_ids: Sequence[str | None] | None = None,
    rules: RuleSet = DEFAULT_RULES,
) -> list[VersionTransition]:
    """One transition per adjacent pair of recovered versions."""
    out = []
    bug_ids = bug_ids or [None] * len(series)
    for s, bug_id in zip(series, bug_ids):
        for a, b in zip(s.versions, s.versions[1:]):
            subject = a.submission_message.subject
            substantive = [m for m in a.review_messages if is_substantive_feedback(m, subject, rules)]
            feedback: set[str] = set()
            for m in substantive:
                feedback |= classify_revision_reasons(m.body, rules)
            delta = None
            if a.diff_text and b.diff_text:
                try:
                    delta = interversion_delta(a.diff_text, b.diff_text)
                except DiffParseError:
                    delta = None
            acked = classify_revision_reasons(b.changelog_notes, rules) if b.changelog_notes else set()
            out.append(
                VersionTransition(
                    series_key=s.series_key,
                    from_version=a.version,
                    to_version=b.version,
                    feedback_categories=_ordered(feedback),
                    delta_lines=delta,
                    acknowledged_categories=_ordered(acked),
                    has_substantive_feedback=bool(substantive),
                    has_changelog=bool(b.changelog_notes),
                    bug_id=bug_id if bug_id is not None else s.series_key,
                )
            )
    return out


def responsiveness(transitions: Iterable[VersionTransition]) -> float | None:
    """Mean per-transition share of feedback categories acknowledged in the next changelog.

    Transitions without categorized feedback are not eligible; returns None
    when no transition is.
    """
    scores = []
    for t in transitions:
        fb = set(t.feedback_categories)
        if not fb:
            continue
        scores.append(len(fb & set(t.acknowledged_categories)) / len(fb))
    if not scores:
        return None
    return sum(scores) / len(scores)


def summarize_transitions(transitions: Sequence[VersionTransition], name: str = "patch_evolution") -> AnalysisResult:
    total = len(transitions)
    substantive = sum(t.has_substantive_feedback for t in transitions)
    with_notes = sum(t.has_changelog for t in transitions)
    rows = []
    for cat in REVISION_CATEGORIES:
        hits = [t for t in transitions if cat in t.feedback_categories]
        if not hits:
            continue
        deltas = [t.delta_lines for t in hits if t.delta_lines is not None]
        acked = sum(cat in t.acknowledged_categories for t in hits)
        rows.append(
            {
                "category": cat,
                "transitions": len(hits),
                "pct": pct(len(hits), total),
                "avg_delta_lines": round(sum(deltas) / len(deltas), 1) if deltas else None,
                "changelog_pct": pct(acked, len(hits)),
            }
        )
    order = {c: i for i, c in enumerate(REVISION_CATEGORIES)}
    rows.sort(key=lambda r: (-r["transitions"], order[r["category"]]))
    resp = responsiveness(transitions)
    summary = {
        "transitions": total,
        "substantive_feedback": substantive,
        "substantive_feedback_pct": pct(substantive, total),
        "changelog_present": with_notes,
        "changelog_present_pct": pct(with_notes, total),
        "responsiveness": None if resp is None else round(resp, 3),
    }
    details = [
        {
            "bug_id": t.bug_id,
            "series_key": t.series_key,
            "from_version": t.from_version,
            "to_version": t.to_version,
            "feedback_categories": t.feedback_categories,
            "acknowledged_categories": t.acknowledged_categories,
            "delta_lines": t.delta_lines,
            "has_substantive_feedback": t.has_substantive_feedback,
            "has_changelog": t.has_changelog,
        }
        for t in transitions
    ]
    return AnalysisResult(name=name, summary=summary, details=details, tables={"evolution": rows})


def analyze_evolution(
    series: Sequence[PatchSeries],
    bug_ids: Sequence[str | None] | None = None,
    rules: RuleSet = DEFAULT_RULES,
) -> AnalysisResult:
    return summarize_transitions(build_transitions(series, bug_ids, rules))
