from __future__ import annotations

from collections import Counter

from ..diffs import LocalityLevel
from ..models import Corpus
from ..rules import DEFAULT_RULES, REVISION_CATEGORIES, RuleSet
from .base import AnalysisResult, BaseAnalyzer, lower_median, pct, register
from .discussion import combine_threads, rank_case_studies
from .evolution import build_transitions, summarize_transitions
from .facts import _size, bug_facts


def _fixed(corpus: Corpus):
    return [b for b in corpus.bugs if b.status == "fixed"]


@register
class BugTypeAnalyzer(BaseAnalyzer):
    analyzer_id = "bug_type"
    name = analyzer_id

    def analyze(self, corpus: Corpus, rules: RuleSet = DEFAULT_RULES) -> AnalysisResult:
        details = []
        for bug in corpus.bugs:
            f = bug_facts(bug, rules)
            details.append(
                {"bug_id": bug.bug_id, "bug_type": f.bug_type, "patch_lines": f.patch_lines, "days_to_fix": f.days_to_fix}
            )
        counts = Counter(d["bug_type"] for d in details)
        rows = []
        for bug_type, n in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0])):
            rows_for = [d for d in details if d["bug_type"] == bug_type]
            lines = lower_median(d["patch_lines"] for d in rows_for if d["patch_lines"] is not None)
            days = lower_median(d["days_to_fix"] for d in rows_for if d["days_to_fix"] is not None)
            rows.append(
                {
                    "bug_type": bug_type,
                    "count": n,
                    "pct": pct(n, len(details)),
                    "median_lines": lines,
                    "median_days": None if days is None else round(days, 1),
                }
            )
        summary = {"bugs": len(details), "categories": len(counts)}
        return AnalysisResult(self.name, summary, details, {"bug_types": rows})


@register
class FixPatternAnalyzer(BaseAnalyzer):
    analyzer_id = "fix_pattern"
    name = analyzer_id

    def analyze(self, corpus: Corpus, rules: RuleSet = DEFAULT_RULES) -> AnalysisResult:
        details = []
        for bug in _fixed(corpus):
            if bug.merged_fix is None:
                continue
            details.append({"bug_id": bug.bug_id, "fix_patterns": bug_facts(bug, rules).fix_patterns})
        total = len(details)
        matched = [d for d in details if d["fix_patterns"]]
        counts = Counter(p for d in details for p in d["fix_patterns"])
        rows = [
            {"fix_pattern": p, "count": counts[p], "pct": pct(counts[p], total)}
            for p in sorted(counts, key=lambda p: (-counts[p], p))
        ]
        summary = {
            "bugs": total,
            "matched": len(matched),
            "matched_pct": pct(len(matched), total),
            "avg_patterns_per_matched_bug": round(sum(counts.values()) / len(matched), 2) if matched else 0.0,
        }
        return AnalysisResult(self.name, summary, details, {"fix_patterns": rows})


@register
class FixLocalityAnalyzer(BaseAnalyzer):
    analyzer_id = "fix_locality"
    name = analyzer_id

    def analyze(self, corpus: Corpus, rules: RuleSet = DEFAULT_RULES) -> AnalysisResult:
        details = []
        excluded = 0
        for bug in _fixed(corpus):
            if bug.merged_fix is None:
                continue
            f = bug_facts(bug, rules)
            if f.locality is None:
                excluded += 1
                continue
            details.append({"bug_id": bug.bug_id, "locality": f.locality.value})
        counts = Counter(d["locality"] for d in details)
        rows = [
            {"locality": lvl.value, "count": counts.get(lvl.value, 0), "pct": pct(counts.get(lvl.value, 0), len(details))}
            for lvl in LocalityLevel
        ]
        summary = {"analyzable": len(details), "excluded_no_frames": excluded}
        return AnalysisResult(self.name, summary, details, {"locality": rows})


@register
class DifficultyAnalyzer(BaseAnalyzer):
    analyzer_id = "difficulty"
    name = analyzer_id

    def analyze(self, corpus: Corpus, rules: RuleSet = DEFAULT_RULES) -> AnalysisResult:
        details = []
        excluded = 0
        for bug in _fixed(corpus):
            if bug.merged_fix is None:
                continue
            f = bug_facts(bug, rules)
            if f.difficulty is None:
                excluded += 1
                continue
            details.append(
                {
                    "bug_id": bug.bug_id,
                    "score": f.difficulty.score,
                    "tier": f.difficulty.tier,
                    "factors": f.difficulty.factor_breakdown,
                    "patch_lines": f.patch_lines,
                    "files": f.files,
                    "days_to_fix": f.days_to_fix,
                }
            )
        rows = []
        for tier in ("easy", "medium", "hard"):
            sel = [d for d in details if d["tier"] == tier]
            days = lower_median(d["days_to_fix"] for d in sel)
            rows.append(
                {
                    "tier": tier,
                    "count": len(sel),
                    "pct": pct(len(sel), len(details)),
                    "median_lines": lower_median(d["patch_lines"] for d in sel),
                    "median_files": lower_median(d["files"] for d in sel),
                    "median_days": None if days is None else round(days, 1),
                }
            )
        summary = {"scored": len(details), "excluded": excluded}
        return AnalysisResult(self.name, summary, details, {"tiers": rows})


@register
class RevisionReasonAnalyzer(BaseAnalyzer):
    analyzer_id = "revision_reasons"
    name = analyzer_id

    def analyze(self, corpus: Corpus, rules: RuleSet = DEFAULT_RULES) -> AnalysisResult:
        details = []
        for bug in corpus.bugs:
            if bug.series is None or len(bug.series.versions) < 2:
                continue
            f = bug_facts(bug, rules)
            details.append(
                {
                    "bug_id": bug.bug_id,
                    "revisions": f.revisions,
                    "categories": f.revision_categories,
                    "external_feedback": f.has_external_feedback,
                }
            )
        total = len(details)
        rows = []
        for cat in REVISION_CATEGORIES:
            n = sum(cat in d["categories"] for d in details)
            if n:
                rows.append({"category": cat, "bugs": n, "pct": pct(n, total)})
        rows.sort(key=lambda r: -r["bugs"])
        self_revised = sum(not d["external_feedback"] for d in details)
        summary = {
            "multi_version_bugs": total,
            "self_revised": self_revised,
            "self_revised_pct": pct(self_revised, total),
        }
        return AnalysisResult(self.name, summary, details, {"revision_reasons": rows})


@register
class DiscussionLessonsAnalyzer(BaseAnalyzer):
    analyzer_id = "discussion_lessons"
    name = analyzer_id

    def analyze(self, corpus: Corpus, rules: RuleSet = DEFAULT_RULES) -> AnalysisResult:
        details = []
        for bug in corpus.bugs:
            threads = corpus.threads_for(bug)
            if not threads:
                continue
            details.append({"bug_id": bug.bug_id, **combine_threads(threads, rules)})
        n = len(details)

        def avg(key):
            return round(sum(d[key] for d in details) / n, 2) if n else 0.0

        summary = {
            "bugs_with_threads": n,
            "avg_reviewers": avg("reviewers"),
            "avg_replies": avg("replies"),
            "avg_max_depth": avg("max_depth"),
            "avg_substantive": avg("substantive"),
        }
        return AnalysisResult(self.name, summary, details, {})


@register
class PatchEvolutionAnalyzer(BaseAnalyzer):
    analyzer_id = "patch_evolution"
    name = analyzer_id

    def analyze(self, corpus: Corpus, rules: RuleSet = DEFAULT_RULES) -> AnalysisResult:
        with_series = [b for b in corpus.bugs if b.series is not None]
        transitions = build_transitions([b.series for b in with_series], [b.bug_id for b in with_series], rules)
        return summarize_transitions(transitions, self.name)


def case_study_rows(corpus: Corpus, rules: RuleSet = DEFAULT_RULES) -> list[dict]:
    rows = []
    for bug in corpus.bugs:
        f = bug_facts(bug, rules)
        final = f.patch_lines
        if final is None and bug.series is not None:
            last = bug.series.versions[-1]
            s = _size(last.diff_text) if last.diff_text else None
            final = s[0] if s else None
        gap = abs(f.v1_size - final) if f.v1_size is not None and final is not None else 0
        threads = corpus.threads_for(bug)
        rows.append(
            {
                "bug_id": bug.bug_id,
                "revisions": f.revisions,
                "size_gap": gap,
                "locality_rank": f.locality.rank if f.locality is not None else 0,
                "discussion_depth": max((t.depth() for t in threads), default=0),
            }
        )
    return rows


def find_case_studies(corpus: Corpus, rules: RuleSet = DEFAULT_RULES) -> list[dict]:
    return rank_case_studies(case_study_rows(corpus, rules))


@register
class CaseStudyAnalyzer(BaseAnalyzer):
    analyzer_id = "case_study"
    name = analyzer_id

    def analyze(self, corpus: Corpus, rules: RuleSet = DEFAULT_RULES) -> AnalysisResult:
        ranked = find_case_studies(corpus, rules)
        summary = {"bugs": len(ranked), "top": ranked[0]["bug_id"] if ranked else None}
        ranking = [{"bug_id": r["bug_id"], "interestingness": r["interestingness"]} for r in ranked]
        return AnalysisResult(self.name, summary, ranked, {"ranking": ranking})


class _ExtensionPoint(BaseAnalyzer):
    analyzer_id = ""

    @property
    def name(self) -> str:
        return self.analyzer_id

    def analyze(self, corpus: Corpus, rules: RuleSet = DEFAULT_RULES) -> AnalysisResult:
        raise NotImplementedError(f"analyzer {self.analyzer_id!r} is a registered extension point only")


@register
class BackportDownstreamAnalyzer(_ExtensionPoint):
    analyzer_id = "backport_downstream"


@register
class InfoSufficiencyAnalyzer(_ExtensionPoint):
    analyzer_id = "info_sufficiency"


@register
class InsightClustersAnalyzer(_ExtensionPoint):
    analyzer_id = "insight_clusters"


EXTENSION_POINTS = ("backport_downstream", "info_sufficiency", "insight_clusters")
IMPLEMENTED = (
    "bug_type", "fix_pattern", "fix_locality", "difficulty", "revision_reasons",
    "discussion_lessons", "patch_evolution", "case_study",
)
