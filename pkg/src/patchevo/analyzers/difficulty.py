from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

from ..diffs import LocalityLevel
from ..errors import DifficultyError
from ..rules import DEFAULT_RULES, RuleSet

FEATURES = ("patch_lines", "files", "revisions", "locality", "days_to_fix", "has_c_repro")
MAX_SCORE = 12


@dataclass
class DifficultyScore:
    score: int
    tier: str
    factor_breakdown: dict[str, int] = field(default_factory=dict)


def tier_for(score: int) -> str:
    if score <= 3:
        return "easy"
    if score <= 7:
        return "medium"
    return "hard"


def _bucket(value: float, bounds) -> int:
    for i, bound in enumerate(bounds):
        if value <= bound:
            return i
    return len(bounds)


def locality_penalty(level: LocalityLevel | str) -> int:
    level = LocalityLevel(level)
    if level in (LocalityLevel.SAME_FUNCTION, LocalityLevel.SAME_FILE):
        return 0
    if level is LocalityLevel.SAME_DIRECTORY:
        return 1
    return 2


def score_difficulty(features: Mapping[str, Any], rules: RuleSet = DEFAULT_RULES) -> DifficultyScore:
    """Composite 0-12 difficulty from six observable fix properties.

    Each of patch size, file count, revision count, crash/fix locality and
    time-to-fix adds an ordinal penalty; an available C reproducer takes one
    point off. The sum is clamped to [0, 12].
    """
    missing = [f for f in FEATURES if features.get(f) is None]
    if missing:
        raise DifficultyError(f"missing difficulty feature(s): {', '.join(missing)}")
    if features["days_to_fix"] < 0:
        raise DifficultyError("days_to_fix is negative")
    th = rules.difficulty
    breakdown = {
        "patch_lines": _bucket(features["patch_lines"], th["patch_lines"]),
        "files": _bucket(features["files"], th["files"]),
        "revisions": _bucket(features["revisions"], th["revisions"]),
        "locality": locality_penalty(features["locality"]),
        "days_to_fix": _bucket(features["days_to_fix"], th["days_to_fix"]),
        "has_c_repro": -1 if features["has_c_repro"] else 0,
    }
    score = max(0, min(MAX_SCORE, sum(breakdown.values())))
    return DifficultyScore(score=score, tier=tier_for(score), factor_breakdown=breakdown)
