"""Ingestion of syzbot exports, mbox archives and fix commits; corpus store.

The corpus store is a line-delimited JSON file. Its first line is a schema
stamp, every following line is one record tagged with ``kind``::

    {"format": "patchevo-corpus", "version": 1}
    {"kind": "bug", ...}
    {"kind": "message", ...}

syzbot export format (one JSON object per line)::

    {"id": "1c8ff72d", "title": "...", "status": "fixed",
     "crashes": [{"title": "...", "report": "...", "repro-c": "...",
                  "repro-syz": "...", "time": "2021-03-02T10:00:00Z"}],
     "discussions": ["https://lore.kernel.org/all/<message-id>/"],
     "fix-commits": ["<40-hex hash>"]}

Commit file format (one JSON object per line)::

    {"hash": "...", "message": "...", "diff": "...", "author_time": ...,
     "commit_time": ..., "tree": "mainline"}
"""

from __future__ import annotations

import email
import email.policy
import email.utils
import hashlib
import json
import logging
import mailbox
import posixpath
import re
import urllib.parse
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable

from pydantic import TypeAdapter

from .diffs import parse_unified_diff
from .errors import CorpusVersionError, DiffParseError, FormatError, InputError
from .models import BugRecord, Corpus, CrashInstance, MailMessage, MergedFix
from .threads import build_threads, normalize_title, parse_subject_marker, recover_series

log = logging.getLogger(__name__)

CORPUS_FORMAT = "patchevo-corpus"
CORPUS_VERSION = 1
MAX_FRAMES = 16
STATUSES = ("fixed", "open", "invalid")

FRAME_RE = re.compile(
    r"^\s*(?:RIP: [0-9a-f]{4}:)?(?:\[\s*<[0-9a-f]+>\]\s*)?(?P<unreliable>\?\s+)?"
    r"(?P<func>[A-Za-z_][\w.$]*)(?:\+0x[0-9a-f]+/0x[0-9a-f]+)?(?:\s+\[[\w-]+\])?"
    r"\s+(?P<path>[\w.+/-]+\.[A-Za-z]+):\d+"
)
RIP_RE = re.compile(r"^\s*RIP: [0-9a-f]{4}:")
# frames belonging to the reporting machinery, never to the buggy code
NOISE_FUNCS = re.compile(
    r"^(__dump_stack|dump_stack\w*|print_address_description\w*|print_report|kasan_\w+|__kasan_\w+|"
    r"check_region_inline|__asan_\w+|kmsan_\w+|__msan_\w+|__warn|warn_slowpath\w*|report_bug|handle_bug|"
    r"exc_invalid_op|__lock_acquire|lock_acquire|lock_release|asm_exc_\w+|ubsan_\w+|__ubsan_\w+|panic|check_panic_on_warn|__kcsan_\w+|kcsan_\w+)$"
)
HEX40_RE = re.compile(r"^[0-9a-f]{40}$")


KERNEL_TOP_DIRS = frozenset(
    "arch block certs crypto drivers fs include init io_uring ipc kernel lib mm net rust samples "
    "scripts security sound tools virt".split()
)


def normalize_repo_path(path: str) -> str:
    """Repo-relative form of a frame path.

    Absolute build paths (``/syzkaller/managers/ci/kernel/net/core/sock.c``)
    are cut at the first kernel top-level directory; a ``kernel`` component
    directly followed by another top-level name is the checkout itself.
    """
    raw = path.replace("\\", "/")
    norm = posixpath.normpath(raw)
    parts = [p for p in norm.split("/") if p not in ("", ".", "..")]
    if raw.startswith("/"):
        for i, p in enumerate(parts[:-1]):
            if p in KERNEL_TOP_DIRS and not (p == "kernel" and parts[i + 1] in KERNEL_TOP_DIRS):
                return "/".join(parts[i:])
    return "/".join(parts)


def parse_stack_frames(report: str, limit: int = MAX_FRAMES) -> list[tuple[str, str]]:
    """Frames ``(function, repo-relative path)`` of the first call trace, innermost first.

    The RIP line printed before the call trace is the faulting frame itself
    and is kept in front when present.
    """
    frames: list[tuple[str, str]] = []
    lines = report.splitlines()
    start = None
    for i, line in enumerate(lines):
        if "Call Trace:" in line:
            start = i
            break
    if start is None:
        return []
    for line in lines[:start]:
        if RIP_RE.match(line):
            m = FRAME_RE.match(line)
            if m and not NOISE_FUNCS.match(m.group("func")):
                frames.append((m.group("func"), normalize_repo_path(m.group("path"))))
            break
    seen_frame = False
    for line in lines[start + 1:]:
        stripped = line.strip()
        if stripped in ("<TASK>", "<IRQ>", "</IRQ>", "<NMI>", "</NMI>", "<SOFTIRQ>", "</SOFTIRQ>"):
            continue
        if stripped == "</TASK>" or (not stripped and seen_frame):
            break
        m = FRAME_RE.match(line)
        if not m:
            if seen_frame and line and not line[0].isspace():
                break
            continue
        seen_frame = True
        if m.group("unreliable") or NOISE_FUNCS.match(m.group("func")):
            continue
        frame = (m.group("func"), normalize_repo_path(m.group("path")))
        if frames and frames[-1] == frame:
            continue
        frames.append(frame)
        if len(frames) >= limit:
            break
    return frames[:limit]


def parse_time(value: Any) -> int | None:
    """Epoch seconds from an int/float or a date string (ISO 8601 or RFC 2822)."""
    if value is None or value == "":
        return None
    if isinstance(value, (int, float)):
        return int(value)
    text = str(value).strip()
    if re.fullmatch(r"\d+(\.\d+)?", text):
        return int(float(text))
    iso = text.replace("/", "-")
    if iso.endswith("Z"):
        iso = iso[:-1] + "+00:00"
    try:
        dt = datetime.fromisoformat(iso)
    except ValueError:
        try:
            dt = email.utils.parsedate_to_datetime(text)
        except (TypeError, ValueError):
            raise ValueError(f"unparseable timestamp {text!r}") from None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


@dataclass
class ExportBatch:
    records: list[BugRecord] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)


def read_syzbot_export(path: str | Path) -> ExportBatch:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read syzbot export {path}: {exc}") from exc
    batch = ExportBatch()
    stripped = text.lstrip()
    if stripped.startswith("["):
        try:
            entries = list(enumerate(json.loads(stripped), 1))
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: invalid JSON array: {exc}") from exc
    else:
        entries = []
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                entries.append((lineno, json.loads(line)))
            except json.JSONDecodeError as exc:
                batch.skipped.append(f"{path}:{lineno}: invalid JSON ({exc.msg})")
    for lineno, entry in entries:
        try:
            batch.records.append(_bug_from_export(entry))
        except (KeyError, TypeError, ValueError) as exc:
            batch.skipped.append(f"{path}:{lineno}: {exc}")
    for diag in batch.skipped:
        log.warning("skipped export entry: %s", diag)
    if batch.skipped:
        log.warning("%d export entries skipped", len(batch.skipped))
    return batch


def ingest_syzbot_export(path: str | Path) -> list[BugRecord]:
    return read_syzbot_export(path).records


def _bug_from_export(entry: dict) -> BugRecord:
    if not isinstance(entry, dict):
        raise TypeError("entry is not an object")
    bug_id = entry.get("id") or entry.get("bug_id")
    if not bug_id:
        raise KeyError("entry has no bug id")
    status = str(entry.get("status", "fixed")).lower()
    if status not in STATUSES:
        raise ValueError(f"bug {bug_id}: unknown status {status!r}")
    title = entry.get("title", "")
    crashes = []
    for c in entry.get("crashes") or []:
        report = c.get("report") or ""
        raw_time = c.get("time")
        crashes.append(
            CrashInstance(
                report_text=report,
                crash_title=c.get("title") or title,
                stack_frames=parse_stack_frames(report),
                reproducer_c=c.get("repro-c") or None,
                reproducer_syz=c.get("repro-syz") or None,
                timestamp=parse_time(raw_time),
                raw_time=None if raw_time is None else str(raw_time),
            )
        )
    times = [c.timestamp for c in crashes if c.timestamp is not None]
    return BugRecord(
        bug_id=str(bug_id),
        title=title,
        status=status,
        crash_instances=crashes,
        first_crash_time=min(times) if times else None,
        discussion_links=list(entry.get("discussions") or []),
        fix_commit_hashes=[h.lower() for h in entry.get("fix-commits") or []],
    )


def normalize_message_id(raw: str | None) -> str | None:
    if not raw:
        return None
    raw = raw.strip()
    m = re.search(r"<([^<>]+)>", raw)
    if m:
        raw = m.group(1)
    return raw.strip() or None


def _split_references(raw: str | None) -> list[str]:
    if not raw:
        return []
    found = re.findall(r"<([^<>]+)>", raw)
    if not found:
        found = raw.split()
    return [f.strip() for f in found if f.strip()]


def _body_text(msg: email.message.Message) -> str:
    if msg.is_multipart():
        parts = []
        for part in msg.walk():
            if part.get_content_type() == "text/plain" and not part.is_multipart():
                parts.append(_decode_payload(part))
        return "\n".join(parts)
    return _decode_payload(msg)


def _decode_payload(part: email.message.Message) -> str:
    payload = part.get_payload(decode=True)
    if payload is None:
        raw = part.get_payload()
        return raw if isinstance(raw, str) else ""
    charset = part.get_content_charset() or "utf-8"
    try:
        return payload.decode(charset, errors="replace")
    except LookupError:
        return payload.decode("utf-8", errors="replace")


def message_from_email(msg: email.message.Message) -> MailMessage:
    body = _body_text(msg)
    mid = normalize_message_id(msg.get("Message-ID"))
    if mid is None:
        digest = hashlib.sha256()
        for name in ("From", "Date", "Subject", "In-Reply-To"):
            digest.update(str(msg.get(name, "")).encode("utf-8", "replace") + b"\0")
        digest.update(body.encode("utf-8", "replace"))
        mid = f"surrogate-{digest.hexdigest()[:32]}@patchevo.invalid"
    raw_date = msg.get("Date")
    try:
        ts = parse_time(str(raw_date)) if raw_date else 0
    except ValueError:
        log.warning("message %s: unparseable Date %r", mid, raw_date)
        ts = 0
    subject = " ".join(str(msg.get("Subject", "")).split())
    return MailMessage(
        message_id=mid,
        subject=subject,
        sender=str(msg.get("From", "")),
        body=body,
        timestamp=ts or 0,
        in_reply_to=normalize_message_id(msg.get("In-Reply-To")),
        references=_split_references(msg.get("References")),
        raw_date=None if raw_date is None else str(raw_date),
    )


def ingest_mbox(path: str | Path) -> list[MailMessage]:
    p = Path(path)
    if not p.is_file():
        raise InputError(f"cannot read mbox {path}")
    box = mailbox.mbox(str(p), factory=None, create=False)
    try:
        messages = [message_from_email(m) for m in box]
    finally:
        box.close()
    if not messages and p.stat().st_size > 0:
        raise FormatError(f"{path}: no messages found (missing 'From ' separators?)")
    return messages


def ingest_commit(diff_text: str, metadata: dict[str, Any]) -> MergedFix:
    if not diff_text or not diff_text.strip():
        raise InputError("empty diff")
    try:
        files = parse_unified_diff(diff_text)
    except DiffParseError as exc:
        raise DiffParseError(f"rejected commit {metadata.get('hash', '?')}: {exc.reason}", exc.path, exc.hunk) from exc
    if not files:
        raise DiffParseError(f"rejected commit {metadata.get('hash', '?')}: no file sections in diff")
    commit_hash = str(metadata.get("hash") or metadata.get("commit_hash") or "").lower()
    if not HEX40_RE.match(commit_hash):
        raise InputError(f"commit hash {commit_hash!r} is not 40 hex digits")
    return MergedFix(
        commit_hash=commit_hash,
        commit_message=metadata.get("message", ""),
        diff_text=diff_text,
        author_time=parse_time(metadata.get("author_time")),
        commit_time=parse_time(metadata.get("commit_time")),
        source_tree=metadata.get("tree") or "mainline",
    )


def read_commits(path: str | Path) -> dict[str, MergedFix]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read commits file {path}: {exc}") from exc
    fixes: dict[str, MergedFix] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            meta = json.loads(line)
            fix = ingest_commit(meta.get("diff", ""), meta)
        except (json.JSONDecodeError, InputError) as exc:
            log.warning("%s:%d: skipped commit: %s", path, lineno, exc)
            continue
        fixes.setdefault(fix.commit_hash, fix)
    return fixes


def _link_message_id(link: str) -> str:
    """Message-ID from a lore URL (``https://lore.kernel.org/all/<id>/``) or a bare id."""
    if "://" not in link:
        return normalize_message_id(link) or link
    path = urllib.parse.urlparse(link).path.strip("/")
    segments = [urllib.parse.unquote(s) for s in path.split("/") if s]
    for seg in reversed(segments):
        if "@" in seg:
            return seg.strip("<>")
    return segments[-1] if segments else link


def link_corpus(
    bugs: Iterable[BugRecord],
    messages: Iterable[MailMessage],
    fixes: dict[str, MergedFix] | None = None,
) -> Corpus:
    """Attach merged fixes, discussion threads and the patch series to each bug."""
    fixes = fixes or {}
    unique: dict[str, MailMessage] = {}
    for msg in messages:
        unique.setdefault(msg.message_id, msg)
    msgs = sorted(unique.values(), key=lambda m: (m.timestamp, m.message_id))
    roots = build_threads(msgs)
    root_of: dict[str, str] = {}
    for root in roots:
        for node in root.walk():
            root_of[node.message.message_id] = root.message.message_id
    all_series = recover_series(roots)
    series_of_msg = {}
    for s in all_series:
        for v in s.versions:
            for mid in v.part_message_ids:
                series_of_msg[mid] = s
    title_roots: dict[str, list[str]] = {}
    for root in roots:
        marker = parse_subject_marker(root.message.subject)
        if marker.is_patch and not marker.is_reply:
            title_roots.setdefault(marker.normalized_title, []).append(root.message.message_id)

    linked = []
    seen_ids = set()
    for bug in bugs:
        if bug.bug_id in seen_ids:
            log.warning("duplicate bug id %s dropped", bug.bug_id)
            continue
        seen_ids.add(bug.bug_id)
        for h in bug.fix_commit_hashes:
            if h in fixes:
                bug.merged_fix = fixes[h]
                bug.fix_commit_time = fixes[h].commit_time
                break
        thread_ids: list[str] = []
        for link in bug.discussion_links:
            mid = _link_message_id(link)
            rid = root_of.get(mid)
            if rid and rid not in thread_ids:
                thread_ids.append(rid)
        candidates = {id(s): s for s in all_series if any(root_of.get(mid) in thread_ids
                                                          for v in s.versions for mid in v.part_message_ids)}
        # top-level resends of a discussed series belong to the bug too
        for s in candidates.values():
            for rid in title_roots.get(s.series_key, []):
                if rid not in thread_ids:
                    thread_ids.append(rid)
        bug.thread_ids = thread_ids
        bug.series = _pick_series(list(candidates.values()), bug)
        linked.append(bug)
    return Corpus(bugs=linked, messages=msgs)


def _pick_series(candidates, bug: BugRecord):
    if not candidates:
        return None
    fix_title = normalize_title(bug.merged_fix.subject) if bug.merged_fix else None
    return min(
        candidates,
        key=lambda s: (s.series_key != fix_title, -len(s.versions), s.series_key),
    )


_BUG_ADAPTER = TypeAdapter(BugRecord)
_MSG_ADAPTER = TypeAdapter(MailMessage)


def _dumps(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def serialize_corpus(corpus: Corpus) -> str:
    seen = set()
    for bug in corpus.bugs:
        if bug.bug_id in seen:
            raise ValueError(f"duplicate bug id {bug.bug_id}")
        seen.add(bug.bug_id)
        if bug.first_crash_time is not None and bug.fix_commit_time is not None:
            if bug.fix_commit_time < bug.first_crash_time:
                log.warning("bug %s: fix commit predates first crash", bug.bug_id)
    lines = [_dumps({"format": CORPUS_FORMAT, "version": CORPUS_VERSION})]
    for bug in corpus.bugs:
        lines.append(_dumps({"kind": "bug", **_BUG_ADAPTER.dump_python(bug, mode="json")}))
    for msg in corpus.messages:
        lines.append(_dumps({"kind": "message", **_MSG_ADAPTER.dump_python(msg, mode="json")}))
    return "\n".join(lines) + "\n"


def save_corpus(corpus: Corpus, path: str | Path) -> Path:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(serialize_corpus(corpus), encoding="utf-8")
    tmp.replace(path)
    return path


def load_corpus(path: str | Path) -> Corpus:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise InputError(f"cannot read corpus {path}: {exc}") from exc
    return parse_corpus(lines, str(path))


def parse_corpus(lines: list[str], origin: str = "<corpus>") -> Corpus:
    if not lines:
        raise FormatError(f"{origin}: empty corpus file (no schema stamp)")
    try:
        head = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise FormatError(f"{origin}: bad schema stamp") from exc
    if head.get("format") != CORPUS_FORMAT:
        raise FormatError(f"{origin}: not a corpus file")
    if head.get("version") != CORPUS_VERSION:
        raise CorpusVersionError(
            f"{origin}: corpus schema version {head.get('version')!r} is not supported (expected {CORPUS_VERSION})"
        )
    corpus = Corpus()
    for lineno, line in enumerate(lines[1:], 2):
        if not line.strip():
            continue
        rec = json.loads(line)
        kind = rec.pop("kind", None)
        if kind == "bug":
            corpus.bugs.append(_BUG_ADAPTER.validate_python(rec))
        elif kind == "message":
            corpus.messages.append(_MSG_ADAPTER.validate_python(rec))
        else:
            raise FormatError(f"{origin}:{lineno}: unknown record kind {kind!r}")
    return corpus


def render_mbox(messages: Iterable[MailMessage], path: str | Path) -> Path:
    """Write messages as an mbox file (used for fixtures and exports)."""
    path = Path(path)
    if path.exists():
        path.unlink()
    box = mailbox.mbox(str(path))
    try:
        for m in messages:
            em = email.message.EmailMessage(policy=email.policy.compat32)
            em["Message-ID"] = f"<{m.message_id}>"
            em["From"] = m.sender
            em["Subject"] = m.subject
            em["Date"] = m.raw_date or email.utils.formatdate(m.timestamp, usegmt=True)
            if m.in_reply_to:
                em["In-Reply-To"] = f"<{m.in_reply_to}>"
            if m.references:
                em["References"] = " ".join(f"<{r}>" for r in m.references)
            em.set_payload(m.body, charset="utf-8")
            box.add(em)
        box.flush()
    finally:
        box.close()
    return path
