"""Discussion threading and patch-series recovery.

Threads are rebuilt from Message-ID / In-Reply-To / References. Series are
recovered from subject markers such as ``[PATCH v3 1/3]``: submissions that
carry a diff are grouped by their normalized title, so a v2 resent as a new
top-level mail lands in the same series as its v1.
"""

from __future__ import annotations

import logging
import re
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .models import MailMessage, PatchSeries, PatchVersion

log = logging.getLogger(__name__)

REPLY_PREFIX_RE = re.compile(r"^\s*((re|fwd?|aw|sv)\s*:\s*)+", re.IGNORECASE)
BRACKET_RE = re.compile(r"^\s*\[([^\]]*)\]")
PATCH_TOKEN_RE = re.compile(r"^patch(?:[-_]?v(\d+))?$", re.IGNORECASE)
VERSION_TOKEN_RE = re.compile(r"^v(\d+)$", re.IGNORECASE)
PART_TOKEN_RE = re.compile(r"^(\d+)/(\d+)$")


@dataclass(frozen=True)
class SubjectMarker:
    version: int = 1
    part: tuple[int, int] | None = None
    tags: frozenset[str] = frozenset()
    normalized_title: str = ""
    is_patch: bool = False
    is_reply: bool = False

    @property
    def is_cover_letter(self) -> bool:
        return self.part is not None and self.part[0] == 0


def normalize_title(text: str) -> str:
    text = re.sub(r"[^\w\s]", " ", text.lower())
    return " ".join(text.split())


def parse_subject_marker(subject: str) -> SubjectMarker:
    """Parse the bracketed prefix of a mail subject. Never raises."""
    rest = subject or ""
    is_reply = False
    m = REPLY_PREFIX_RE.match(rest)
    if m:
        is_reply = True
        rest = rest[m.end():]
    version = None
    part = None
    tags: set[str] = set()
    is_patch = False
    while True:
        b = BRACKET_RE.match(rest)
        if not b:
            break
        rest = rest[b.end():]
        for token in re.split(r"[\s,]+", b.group(1).strip()):
            if not token:
                continue
            pm = PATCH_TOKEN_RE.match(token)
            vm = VERSION_TOKEN_RE.match(token)
            km = PART_TOKEN_RE.match(token)
            if pm:
                is_patch = True
                if pm.group(1) and int(pm.group(1)) >= 1:
                    version = int(pm.group(1))
            elif vm and int(vm.group(1)) >= 1:
                version = int(vm.group(1))
            elif km and int(km.group(2)) >= 1 and int(km.group(1)) <= int(km.group(2)):
                part = (int(km.group(1)), int(km.group(2)))
            else:
                tags.add(token)
        # "Re:" after the brackets, as some mailers produce
        m = REPLY_PREFIX_RE.match(rest)
        if m:
            is_reply = True
            rest = rest[m.end():]
    return SubjectMarker(
        version=version or 1,
        part=part,
        tags=frozenset(tags),
        normalized_title=normalize_title(rest),
        is_patch=is_patch,
        is_reply=is_reply,
    )


def is_diff_bearing(body: str) -> bool:
    lines = body.splitlines()
    for i, line in enumerate(lines):
        if line.startswith("diff --git"):
            return True
        if line.startswith("--- ") and i + 1 < len(lines) and lines[i + 1].startswith("+++ "):
            return True
    return False


def extract_diff(body: str) -> str:
    """The diff portion of a patch mail, without the trailing mail signature."""
    lines = body.splitlines()
    start = None
    for i, line in enumerate(lines):
        if line.startswith("diff --git") or (
            line.startswith("--- ") and i + 1 < len(lines) and lines[i + 1].startswith("+++ ")
        ):
            start = i
            break
    if start is None:
        return ""
    out = []
    for line in lines[start:]:
        if line == "-- ":
            break
        out.append(line)
    return "\n".join(out).rstrip("\n") + "\n"


CHANGELOG_HEADING_RE = re.compile(
    r"^\s*(?:"
    r"changes\s+(?:since|in|from|for)\s+v?(?P<a>\d+)"
    r"|changes\s+v?(?P<b>\d+)\s*-+>\s*v?(?P<c>\d+)"
    r"|v(?P<d>\d+)\s*-+>\s*v?(?P<e>\d+)"
    r"|v(?P<f>\d+)(?=\s*:)"
    r")\s*(?::\s*(?P<rest>.*))?$",
    re.IGNORECASE,
)


def _is_block_end(line: str) -> bool:
    s = line.strip()
    return (
        not s
        or s == "---"
        or line.startswith("diff --git")
        or line.startswith("--- ")
    )


def extract_changelog_notes(body: str, version: int) -> str | None:
    """Return the changelog block of a resubmission, or None.

    Recognized headings (case-insensitive): ``Changes since vN``, ``Changes in vN``,
    ``vN -> vN+1`` and ``vN:``. The block runs to the next blank line, ``---``
    separator, diff start or another heading. When several headings are present
    the one naming this version or its predecessor is preferred.
    """
    lines = body.splitlines()
    blocks: list[tuple[set[int], str]] = []
    i = 0
    while i < len(lines):
        m = CHANGELOG_HEADING_RE.match(lines[i])
        if not m:
            i += 1
            continue
        nums = {int(g) for g in m.group("a", "b", "c", "d", "e", "f") if g is not None}
        rest = (m.group("rest") or "").strip()
        collected = [rest] if rest else []
        i += 1
        while i < len(lines) and not _is_block_end(lines[i]) and not CHANGELOG_HEADING_RE.match(lines[i]):
            collected.append(lines[i].rstrip())
            i += 1
        if collected:
            blocks.append((nums, "\n".join(collected).strip("\n")))
    if not blocks:
        return None
    for nums, text in blocks:
        if version in nums or (version - 1) in nums:
            return text
    return blocks[0][1]


@dataclass
class ThreadNode:
    message: MailMessage
    children: list["ThreadNode"] = field(default_factory=list)

    def walk(self) -> Iterator["ThreadNode"]:
        yield self
        for child in self.children:
            yield from child.walk()

    def depth(self) -> int:
        return 1 + max((c.depth() for c in self.children), default=0)

    def shape(self):
        """Ordered tree as nested tuples of message ids (for comparisons)."""
        return (self.message.message_id, tuple(c.shape() for c in self.children))


def _order_key(msg: MailMessage):
    return (msg.timestamp, msg.message_id)


def build_threads(messages: Iterable[MailMessage]) -> list[ThreadNode]:
    """Rebuild reply trees; returns roots ordered by timestamp.

    Parent is the In-Reply-To target when known, else the last known
    References entry. Reference cycles are cut at the edge whose child is
    oldest, and that child becomes a root.
    """
    by_id: dict[str, MailMessage] = {}
    for msg in messages:
        by_id.setdefault(msg.message_id, msg)
    parent: dict[str, str | None] = {}
    for mid, msg in by_id.items():
        p = None
        if msg.in_reply_to and msg.in_reply_to in by_id and msg.in_reply_to != mid:
            p = msg.in_reply_to
        else:
            for ref in reversed(msg.references):
                if ref in by_id and ref != mid:
                    p = ref
                    break
        parent[mid] = p

    # cycle breaking
    state: dict[str, int] = {}
    for start in sorted(by_id):
        path = []
        node = start
        while node is not None and state.get(node, 0) == 0:
            state[node] = 1
            path.append(node)
            node = parent[node]
        if node is not None and state.get(node) == 1:
            cycle = path[path.index(node):]
            victim = min(cycle, key=lambda mid: _order_key(by_id[mid]))
            log.warning("reference cycle %s broken at %s", " -> ".join(cycle), victim)
            parent[victim] = None
        for mid in path:
            state[mid] = 2

    nodes = {mid: ThreadNode(msg) for mid, msg in by_id.items()}
    roots = []
    for mid, node in nodes.items():
        p = parent[mid]
        if p is None:
            roots.append(node)
        else:
            nodes[p].children.append(node)
    for node in nodes.values():
        node.children.sort(key=lambda n: _order_key(n.message))
    roots.sort(key=lambda n: _order_key(n.message))
    return roots


STABLE_TAG_RE = re.compile(r"^(\d+\.\d+(\.\d+)?(-stable)?|AUTOSEL|stable)$", re.IGNORECASE)


def is_backport_marker(marker: SubjectMarker) -> bool:
    """Stable-queue postings such as ``[PATCH 5.10 012/100]`` repeat an upstream title."""
    return any(STABLE_TAG_RE.match(t) for t in marker.tags)


def is_submission(msg: MailMessage, marker: SubjectMarker | None = None) -> bool:
    marker = marker or parse_subject_marker(msg.subject)
    if marker.is_reply or not marker.is_patch or is_backport_marker(marker):
        return False
    return marker.is_cover_letter or is_diff_bearing(msg.body)


@dataclass
class _Unit:
    title: str
    version: int
    messages: list[tuple[SubjectMarker, MailMessage]]
    root_id: str

    @property
    def cover(self) -> MailMessage | None:
        for marker, msg in self.messages:
            if marker.is_cover_letter:
                return msg
        return None

    @property
    def lead(self) -> MailMessage:
        return self.cover or self.messages[0][1]


def recover_series(roots: Iterable[ThreadNode]) -> list[PatchSeries]:
    """Group patch submissions found in the given threads into series."""
    roots = list(roots)
    submission_ids: set[str] = set()
    # (root id, version, k) -> parts of a multi-part posting
    multipart: dict[tuple[str, int, int], list[tuple[SubjectMarker, MailMessage]]] = defaultdict(list)
    units: list[_Unit] = []
    for root in roots:
        for node in root.walk():
            msg = node.message
            marker = parse_subject_marker(msg.subject)
            if not is_submission(msg, marker):
                continue
            submission_ids.add(msg.message_id)
            if marker.part is not None and marker.part[1] > 1:
                multipart[(root.message.message_id, marker.version, marker.part[1])].append((marker, msg))
            else:
                units.append(_Unit(marker.normalized_title, marker.version, [(marker, msg)], root.message.message_id))
    for (root_id, version, _), parts in multipart.items():
        parts.sort(key=lambda pm: (pm[0].part[0], _order_key(pm[1])))
        units.append(_Unit(parts[0][0].normalized_title, version, parts, root_id))

    nodes_by_id = {n.message.message_id: n for root in roots for n in root.walk()}

    grouped: dict[str, dict[int, _Unit]] = defaultdict(dict)
    conflicts: dict[str, list[str]] = defaultdict(list)
    for unit in sorted(units, key=lambda u: _order_key(u.lead)):
        slot = grouped[unit.title]
        prev = slot.get(unit.version)
        if prev is not None:
            keep, drop = (unit, prev) if _order_key(unit.lead) >= _order_key(prev.lead) else (prev, unit)
            log.warning(
                "series %r: two submissions of v%d (%s, %s); keeping %s",
                unit.title, unit.version, prev.lead.message_id, unit.lead.message_id, keep.lead.message_id,
            )
            conflicts[unit.title].extend(m.message_id for _, m in drop.messages)
            slot[unit.version] = keep
        else:
            slot[unit.version] = unit

    series = []
    for title in sorted(grouped):
        versions = []
        for version in sorted(grouped[title]):
            unit = grouped[title][version]
            versions.append(_build_version(unit, nodes_by_id, submission_ids))
        series.append(PatchSeries(series_key=title, versions=versions, conflicts=conflicts.get(title, [])))
    return series


def _build_version(unit: _Unit, nodes_by_id: dict[str, ThreadNode], submission_ids: set[str]) -> PatchVersion:
    own = {m.message_id for _, m in unit.messages}
    lead = unit.lead
    diffs = [extract_diff(m.body) for marker, m in unit.messages if not marker.is_cover_letter]
    diff_text = "".join(d for d in diffs if d)

    notes = None
    if unit.version >= 2:
        candidates = [lead] + [m for _, m in unit.messages if m is not lead]
        for msg in candidates:
            notes = extract_changelog_notes(msg.body, unit.version)
            if notes:
                break

    reviews: dict[str, MailMessage] = {}
    for _, msg in unit.messages:
        node = nodes_by_id.get(msg.message_id)
        if node is None:
            continue
        stack = list(node.children)
        while stack:
            child = stack.pop()
            cid = child.message.message_id
            if cid in own:
                continue
            if cid in submission_ids:
                continue
            if child.message.timestamp >= lead.timestamp:
                reviews[cid] = child.message
            stack.extend(child.children)
    return PatchVersion(
        version=unit.version,
        diff_text=diff_text,
        submission_message=lead,
        review_messages=sorted(reviews.values(), key=_order_key),
        changelog_notes=notes,
        is_cover_letter_present=unit.cover is not None,
        part_message_ids=[m.message_id for _, m in unit.messages],
    )
