from __future__ import annotations

from dataclasses import asdict, dataclass
from statistics import mean, pstdev
from typing import Iterable, Mapping, Sequence

from ..rules import DEFAULT_RULES, RuleSet
from ..threads import ThreadNode
from .classify import is_bot, is_substantive_feedback, sender_address


@dataclass
class DiscussionMetrics:
    reviewers: int = 0
    replies: int = 0
    max_depth: int = 0
    substantive: int = 0


def _reviewers(thread: ThreadNode, rules: RuleSet) -> set[str]:
    submitter = sender_address(thread.message.sender)
    found = set()
    for node in thread.walk():
        if node is thread:
            continue
        who = sender_address(node.message.sender)
        if who and who != submitter and not is_bot(node.message.sender, rules):
            found.add(who)
    return found


def discussion_lessons(thread: ThreadNode, rules: RuleSet = DEFAULT_RULES) -> DiscussionMetrics:
    """Reviewer count, reply count, depth and substantive replies of one thread."""
    replies = [n.message for n in thread.walk() if n is not thread]
    substantive = sum(is_substantive_feedback(m, thread.message.subject, rules) for m in replies)
    return DiscussionMetrics(len(_reviewers(thread, rules)), len(replies), thread.depth(), substantive)


def combine_threads(threads: Iterable[ThreadNode], rules: RuleSet = DEFAULT_RULES) -> dict:
    """Per-bug totals across all of a bug's threads (reviewers counted once)."""
    reviewers: set[str] = set()
    out = DiscussionMetrics()
    for t in threads:
        m = discussion_lessons(t, rules)
        reviewers |= _reviewers(t, rules)
        out.replies += m.replies
        out.substantive += m.substantive
        out.max_depth = max(out.max_depth, m.max_depth)
    out.reviewers = len(reviewers)
    return asdict(out)


CASE_FEATURES = ("revisions", "size_gap", "locality_rank", "discussion_depth")


def rank_case_studies(rows: Sequence[Mapping]) -> list[dict]:
    """Order bugs by the mean z-score of the case-study features, highest first.

    Features with zero spread contribute 0. Ties go to the smaller bug_id.
    """
    stats = {}
    for f in CASE_FEATURES:
        vals = [float(r[f]) for r in rows]
        stats[f] = (mean(vals), pstdev(vals)) if vals else (0.0, 0.0)
    ranked = []
    for r in rows:
        z = 0.0
        for f in CASE_FEATURES:
            mu, sd = stats[f]
            z += (float(r[f]) - mu) / sd if sd > 0 else 0.0
        ranked.append({**r, "interestingness": round(z / len(CASE_FEATURES), 6)})
    ranked.sort(key=lambda r: (-r["interestingness"], r["bug_id"]))
    return ranked
