"""Analyzer framework and the built-in analyzers."""

from .base import REGISTRY, AnalysisResult, BaseAnalyzer, lower_median, pct, run_analyzers
from .builtin import EXTENSION_POINTS, IMPLEMENTED, case_study_rows, find_case_studies
from .classify import (
    classify_bug_text,
    classify_bug_type,
    classify_revision_reasons,
    detect_fix_patterns,
    is_substantive_feedback,
)
from .difficulty import DifficultyScore, score_difficulty, tier_for
from .discussion import DiscussionMetrics, discussion_lessons, rank_case_studies
from .evolution import VersionTransition, analyze_evolution, build_transitions, responsiveness, summarize_transitions
from .facts import BugFacts, bug_facts

__all__ = [
    "REGISTRY", "AnalysisResult", "BaseAnalyzer", "lower_median", "pct", "run_analyzers",
    "EXTENSION_POINTS", "IMPLEMENTED", "case_study_rows", "find_case_studies",
    "classify_bug_text", "classify_bug_type", "classify_revision_reasons", "detect_fix_patterns",
    "is_substantive_feedback", "DifficultyScore", "score_difficulty", "tier_for",
    "DiscussionMetrics", "discussion_lessons", "rank_case_studies",
    "VersionTransition", "analyze_evolution", "build_transitions", "responsiveness", "summarize_transitions",
    "BugFacts", "bug_facts",
]
