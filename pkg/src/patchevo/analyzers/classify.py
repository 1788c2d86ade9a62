"""Rule-driven classifiers: bug type, fix pattern, revision reason, feedback filter."""

from __future__ import annotations

import email.utils
import re

from ..diffs import parse_unified_diff
from ..models import CrashInstance, MailMessage, MergedFix
from ..rules import DEFAULT_RULES, RuleSet

TAG_LINE_RE = re.compile(r"^(Acked|Reviewed|Tested|Signed-off)-by:\s*\S", re.IGNORECASE)
ATTRIBUTION_RE = re.compile(r"(wrote|writes):\s*$")
COURTESY_RE = re.compile(
    r"^(thanks|thank you|thx|regards|best regards|cheers|looks good( to me)?|lgtm)[\s!.,]*$", re.IGNORECASE
)
# statement lines too generic to count as "moved"
TRIVIAL_LINES = {"", "{", "}", "};", "} else {", "else", "break;", "return;", "return 0;", "continue;"}

OTHER = "other"


def classify_bug_text(title: str, report: str = "", rules: RuleSet = DEFAULT_RULES) -> str:
    """First rule matching the title wins; the report body is consulted only if none does."""
    for text in (title, report):
        if not text:
            continue
        for name, rx in rules.bug_types:
            if rx.search(text):
                return name
    return OTHER


def classify_bug_type(crash: CrashInstance, rules: RuleSet = DEFAULT_RULES) -> str:
    return classify_bug_text(crash.crash_title, crash.report_text, rules)


def _changed_lines(fix_diff: str):
    files = parse_unified_diff(fix_diff)
    added, removed, moved = [], [], False
    for fd in files:
        fa, fr = [], []
        for hunk in fd.hunks:
            for line in hunk.lines:
                if line.startswith("+"):
                    fa.append(line[1:])
                elif line.startswith("-"):
                    fr.append(line[1:])
        added += fa
        removed += fr
        stripped_added = {l.strip() for l in fa} - TRIVIAL_LINES
        if any(l.strip() in stripped_added for l in fr if l.strip() not in TRIVIAL_LINES):
            moved = True
    return added, removed, moved


def detect_fix_patterns(fix: MergedFix, rules: RuleSet = DEFAULT_RULES) -> list[str]:
    """Sorted ids of every fix pattern whose detectors fire on the fix."""
    added, removed, moved = _changed_lines(fix.diff_text)
    added_text = "\n".join(added)
    removed_text = "\n".join(removed)
    found = set()
    for rule in rules.fix_patterns:
        if rule.pattern_id in found:
            continue
        if rule.field == "moved":
            hit = moved
        elif rule.field == "added":
            hit = bool(rule.regex.search(added_text))
        elif rule.field == "removed":
            hit = bool(rule.regex.search(removed_text))
        else:
            hit = bool(rule.regex.search(fix.commit_message))
        if hit:
            found.add(rule.pattern_id)
    return sorted(found)


def own_lines(text: str) -> list[str]:
    """Lines written by the author: no quoted text, attribution lines or signature."""
    out = []
    for line in text.splitlines():
        if line == "-- ":
            break
        s = line.lstrip()
        if s.startswith(">"):
            continue
        if ATTRIBUTION_RE.search(s):
            continue
        out.append(line)
    return out


def classify_revision_reasons(feedback_text: str, rules: RuleSet = DEFAULT_RULES) -> set[str]:
    text = "\n".join(own_lines(feedback_text or ""))
    if not text.strip():
        return set()
    return {cat for cat, patterns in rules.revision_keywords.items() if any(p.search(text) for p in patterns)}


def sender_address(sender: str) -> str:
    name, addr = email.utils.parseaddr(sender or "")
    return (addr or name or sender or "").strip().lower()


def is_bot(sender: str, rules: RuleSet = DEFAULT_RULES) -> bool:
    return any(rx.search(sender or "") for rx in rules.bot_senders)


def is_stable_thread(subject: str, rules: RuleSet = DEFAULT_RULES) -> bool:
    return any(rx.search(subject or "") for rx in rules.stable_markers)


def is_substantive_feedback(
    message: MailMessage, thread_subject: str | None = None, rules: RuleSet = DEFAULT_RULES
) -> bool:
    if is_bot(message.sender, rules):
        return False
    if is_stable_thread(message.subject, rules) or (thread_subject and is_stable_thread(thread_subject, rules)):
        return False
    content = [l.strip() for l in own_lines(message.body) if l.strip()]
    content = [l for l in content if not COURTESY_RE.match(l)]
    if not content:
        return False
    return not all(TAG_LINE_RE.match(l) for l in content)
