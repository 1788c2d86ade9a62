"""Unified-diff parsing, size accounting and fix-locality classification."""

from __future__ import annotations

import posixpath
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, Iterable

from .errors import DiffParseError, LocalityError

if TYPE_CHECKING:
    from .corpus import CrashInstance, MergedFix

HUNK_RE = re.compile(r"^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@ ?(.*)$")
GIT_HEADER_RE = re.compile(r"^diff --git (\S+) (\S+)")
# last identifier directly followed by "(" in the hunk context, e.g. "static void nci_rx_work(...)"
FUNC_RE = re.compile(r"([A-Za-z_]\w*)\s*\(")


@dataclass
class Hunk:
    old_start: int
    old_len: int
    new_start: int
    new_len: int
    lines: list[str] = field(default_factory=list)
    context: str = ""


@dataclass
class FileDiff:
    old_path: str | None
    new_path: str | None
    hunks: list[Hunk] = field(default_factory=list)
    added: int = 0
    removed: int = 0
    touched_functions: set[str] = field(default_factory=set)

    @property
    def path(self) -> str:
        """The path the fix lives at after the change (old path for deletions)."""
        return self.new_path or self.old_path or ""


def _strip_prefix(raw: str) -> str | None:
    raw = raw.split("\t", 1)[0].strip()
    if raw == "/dev/null":
        return None
    if raw.startswith(("a/", "b/")):
        raw = raw[2:]
    return raw


def _function_name(context: str) -> str | None:
    names = FUNC_RE.findall(context)
    return names[-1] if names else None


def parse_unified_diff(text: str) -> list[FileDiff]:
    """Parse unified diff text into one FileDiff per file section.

    Text before the first file header and between sections (commit message,
    diffstat, mail signature) is ignored. Hunk bodies are consumed by the
    counts in their headers, so a short or overlong body is an error.
    """
    lines = text.splitlines()
    files: list[FileDiff] = []
    current: FileDiff | None = None
    i = 0
    n = len(lines)
    while i < n:
        line = lines[i]
        git = GIT_HEADER_RE.match(line)
        if git:
            current = FileDiff(_strip_prefix(git.group(1)), _strip_prefix(git.group(2)))
            files.append(current)
            i += 1
            continue
        if line.startswith("--- ") and i + 1 < n and lines[i + 1].startswith("+++ "):
            old, new = _strip_prefix(line[4:]), _strip_prefix(lines[i + 1][4:])
            if current is None or current.hunks:
                current = FileDiff(old, new)
                files.append(current)
            else:
                # refine the git header paths (/dev/null for adds and deletes)
                current.old_path, current.new_path = old, new
            i += 2
            continue
        if line.startswith("@@"):
            if current is None:
                raise DiffParseError("hunk outside of a file section", hunk=1)
            hunk_no = len(current.hunks) + 1
            m = HUNK_RE.match(line)
            if not m:
                raise DiffParseError(f"malformed hunk header {line!r}", current.path, hunk_no)
            hunk = Hunk(
                old_start=int(m.group(1)),
                old_len=int(m.group(2)) if m.group(2) is not None else 1,
                new_start=int(m.group(3)),
                new_len=int(m.group(4)) if m.group(4) is not None else 1,
                context=m.group(5).strip(),
            )
            i = _read_hunk_body(lines, i + 1, hunk, current, hunk_no)
            current.hunks.append(hunk)
            if hunk.context:
                name = _function_name(hunk.context)
                if name:
                    current.touched_functions.add(name)
            continue
        if current is not None and current.hunks and line[:1] in "+-" and line not in ("--", "-- "):
            if not (line.startswith("--- ") or line.startswith("+++ ")):
                raise DiffParseError("hunk body longer than its header", current.path, len(current.hunks))
        i += 1
    return files


def _read_hunk_body(lines: list[str], i: int, hunk: Hunk, fd: FileDiff, hunk_no: int) -> int:
    old_left, new_left = hunk.old_len, hunk.new_len
    while old_left > 0 or new_left > 0:
        if i >= len(lines):
            raise DiffParseError("hunk body shorter than its header", fd.path, hunk_no)
        line = lines[i]
        tag = line[:1]
        if line == "" or tag == " ":
            # mailers strip the trailing blank of empty context lines
            old_left -= 1
            new_left -= 1
        elif tag == "-":
            old_left -= 1
            fd.removed += 1
        elif tag == "+":
            new_left -= 1
            fd.added += 1
        elif tag == "\\":
            hunk.lines.append(line)
            i += 1
            continue
        else:
            raise DiffParseError("hunk body shorter than its header", fd.path, hunk_no)
        if old_left < 0 or new_left < 0:
            raise DiffParseError("hunk length inconsistent with body", fd.path, hunk_no)
        hunk.lines.append(line)
        i += 1
    while i < len(lines) and lines[i].startswith("\\"):
        hunk.lines.append(lines[i])
        i += 1
    return i


def diff_size(diffs: Iterable[FileDiff]) -> tuple[int, int]:
    """Return ``(added + removed, number of files)``."""
    total = files = 0
    for fd in diffs:
        total += fd.added + fd.removed
        files += 1
    return total, files


def interversion_delta(a: str, b: str) -> int:
    """Absolute difference of total modified lines between two patch versions."""
    return abs(diff_size(parse_unified_diff(a))[0] - diff_size(parse_unified_diff(b))[0])


class LocalityLevel(str, Enum):
    SAME_FUNCTION = "same_function"
    SAME_FILE = "same_file"
    SAME_DIRECTORY = "same_directory"
    SAME_SUBSYSTEM = "same_subsystem"
    DIFFERENT_SUBSYSTEM = "different_subsystem"

    @property
    def rank(self) -> int:
        return list(LocalityLevel).index(self)


class SubsystemMap:
    """Path-prefix overrides on top of the top-level-directory rule.

    Override file lines look like ``drivers/gpu/drm -> drm``; ``→`` works too.
    The longest matching prefix wins.
    """

    def __init__(self, overrides: dict[str, str] | None = None):
        self.overrides = dict(overrides or {})

    @classmethod
    def from_file(cls, path: str | Path) -> "SubsystemMap":
        overrides = {}
        for raw in Path(path).read_text().splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            sep = "→" if "→" in line else "->"
            prefix, _, sub = line.partition(sep)
            if not sub.strip():
                raise ValueError(f"bad subsystem mapping line: {raw!r}")
            overrides[prefix.strip().strip("/")] = sub.strip()
        return cls(overrides)

    def __call__(self, path: str) -> str:
        if not path:
            raise ValueError("empty path has no subsystem")
        best = None
        for prefix, sub in self.overrides.items():
            if path == prefix or path.startswith(prefix + "/"):
                if best is None or len(prefix) > len(best[0]):
                    best = (prefix, sub)
        if best:
            return best[1]
        parts = path.strip("/").split("/")
        if parts[0] == "drivers" and len(parts) > 2:
            return "/".join(parts[:2])
        return parts[0]


DEFAULT_SUBSYSTEMS = SubsystemMap()


def subsystem_of(path: str, mapping: SubsystemMap = DEFAULT_SUBSYSTEMS) -> str:
    return mapping(path)


def locality_between(
    frames: Iterable[tuple[str, str]],
    diffs: Iterable[FileDiff],
    mapping: SubsystemMap = DEFAULT_SUBSYSTEMS,
) -> LocalityLevel:
    """Most local level satisfied by any (frame, fixed file) pair."""
    frames = list(frames)
    if not frames:
        raise LocalityError("crash has no stack frames")
    diffs = [d for d in diffs if d.path]
    best = LocalityLevel.DIFFERENT_SUBSYSTEM
    for func, fpath in frames:
        for fd in diffs:
            if fpath == fd.path:
                level = LocalityLevel.SAME_FUNCTION if func in fd.touched_functions else LocalityLevel.SAME_FILE
            elif posixpath.dirname(fpath) == posixpath.dirname(fd.path):
                level = LocalityLevel.SAME_DIRECTORY
            elif mapping(fpath) == mapping(fd.path):
                level = LocalityLevel.SAME_SUBSYSTEM
            else:
                level = LocalityLevel.DIFFERENT_SUBSYSTEM
            if level.rank < best.rank:
                best = level
                if best is LocalityLevel.SAME_FUNCTION:
                    return best
    return best


def classify_locality(
    crash: "CrashInstance", fix: "MergedFix", mapping: SubsystemMap = DEFAULT_SUBSYSTEMS
) -> LocalityLevel:
    return locality_between(crash.stack_frames, parse_unified_diff(fix.diff_text), mapping)
