"""Persisted domain records.

All timestamps are UTC epoch seconds; where the source carried a textual
date the original string is kept next to it in a ``raw_*`` field.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import TYPE_CHECKING, Literal, Optional

if TYPE_CHECKING:
    from .threads import ThreadNode

BugStatus = Literal["fixed", "open", "invalid"]


@dataclass
class CrashInstance:
    report_text: str
    crash_title: str
    stack_frames: list[tuple[str, str]] = field(default_factory=list)
    reproducer_c: Optional[str] = None
    reproducer_syz: Optional[str] = None
    timestamp: Optional[int] = None
    raw_time: Optional[str] = None


@dataclass
class MailMessage:
    message_id: str
    subject: str = ""
    sender: str = ""
    body: str = ""
    timestamp: int = 0
    in_reply_to: Optional[str] = None
    references: list[str] = field(default_factory=list)
    raw_date: Optional[str] = None


@dataclass
class MergedFix:
    commit_hash: str
    commit_message: str
    diff_text: str
    author_time: Optional[int] = None
    commit_time: Optional[int] = None
    source_tree: str = "mainline"

    @property
    def subject(self) -> str:
        return self.commit_message.strip().splitlines()[0] if self.commit_message.strip() else ""


@dataclass
class PatchVersion:
    version: int
    diff_text: str
    submission_message: MailMessage
    review_messages: list[MailMessage] = field(default_factory=list)
    changelog_notes: Optional[str] = None
    is_cover_letter_present: bool = False
    part_message_ids: list[str] = field(default_factory=list)


@dataclass
class PatchSeries:
    series_key: str
    versions: list[PatchVersion]
    # submissions dropped because another message claimed the same version
    conflicts: list[str] = field(default_factory=list)

    @property
    def version_numbers(self) -> list[int]:
        return [v.version for v in self.versions]


@dataclass
class BugRecord:
    bug_id: str
    title: str
    status: BugStatus = "fixed"
    crash_instances: list[CrashInstance] = field(default_factory=list)
    thread_ids: list[str] = field(default_factory=list)
    series: Optional[PatchSeries] = None
    merged_fix: Optional[MergedFix] = None
    first_crash_time: Optional[int] = None
    fix_commit_time: Optional[int] = None
    discussion_links: list[str] = field(default_factory=list)
    fix_commit_hashes: list[str] = field(default_factory=list)

    @property
    def days_to_fix(self) -> float | None:
        if self.first_crash_time is None or self.fix_commit_time is None:
            return None
        return (self.fix_commit_time - self.first_crash_time) / 86400.0


@dataclass
class Corpus:
    bugs: list[BugRecord] = field(default_factory=list)
    messages: list[MailMessage] = field(default_factory=list)

    @cached_property
    def thread_index(self) -> dict[str, "ThreadNode"]:
        from .threads import build_threads

        return {root.message.message_id: root for root in build_threads(self.messages)}

    def threads_for(self, bug: BugRecord) -> list["ThreadNode"]:
        index = self.thread_index
        return [index[t] for t in bug.thread_ids if t in index]
