"""Builders shared by the test modules: mails, diffs, reply forests and synthetic series."""

from __future__ import annotations

import random
from dataclasses import dataclass

from patchevo.memory import LESSON_GUIDANCE
from patchevo.models import BugRecord, CrashInstance, MailMessage, MergedFix, PatchSeries, PatchVersion
from patchevo.rules import REVISION_CATEGORIES

T0 = 1_600_000_000
DAY = 86400
DEV = "Dev One <dev.one@example.org>"
REVIEWER = "Maintainer A <maint.a@example.org>"
BOT = "syzbot <syzbot+abc@syzkaller.appspotmail.com>"

# reference per-category evolution rows:
# (category, transitions, percent, avg delta lines, changelog percent)
REF_EVOLUTION_ROWS = [
    ("correctness", 673, 42.1, 28.6, 4.5),
    ("commit_message", 644, 40.2, 26.0, 20.7),
    ("api_design", 587, 36.7, 38.2, 14.8),
    ("race_condition", 462, 28.9, 48.1, 8.4),
    ("incomplete_fix", 426, 26.6, 46.3, 4.2),
    ("documentation", 408, 25.5, 36.2, 11.0),
    ("config_build", 388, 24.2, 44.2, 7.0),
    ("style_convention", 376, 23.5, 51.3, 12.8),
    ("error_handling", 348, 21.8, 46.6, 9.2),
    ("scope", 340, 21.2, 32.1, 4.4),
    ("memory_safety", 305, 19.1, 34.5, 4.9),
    ("performance", 206, 12.9, 52.8, 1.9),
]
REF_TRANSITIONS = 1600
REF_SUBSTANTIVE = 1252
REF_CHANGELOG = 582  # 36.4% of 1,600


def mail(
    mid: str,
    subject: str = "",
    body: str = "",
    ts: int = T0,
    parent: str | None = None,
    sender: str = REVIEWER,
    references: list[str] | None = None,
) -> MailMessage:
    refs = references if references is not None else ([parent] if parent else [])
    return MailMessage(mid, subject, sender, body, ts, parent, list(refs))


# diffs


def hunk_lines(old_start: int, new_start: int, body: list[str], context: str = "") -> list[str]:
    old_len = sum(1 for l in body if l[:1] in (" ", "-", ""))
    new_len = sum(1 for l in body if l[:1] in (" ", "+", ""))
    header = f"@@ -{old_start},{old_len} +{new_start},{new_len} @@"
    return [f"{header} {context}" if context else header] + body


def file_section(path: str, hunks: list[list[str]], new_file: bool = False) -> str:
    old = "/dev/null" if new_file else f"a/{path}"
    lines = [f"diff --git a/{path} b/{path}", "index 1111111..2222222 100644", f"--- {old}", f"+++ b/{path}"]
    for h in hunks:
        lines += h
    return "\n".join(lines) + "\n"


def simple_diff(path: str, added: int = 1, removed: int = 0, func: str = "do_work") -> str:
    body = [" \tint ret;"] + [f"-\told_step_{i}(x);" for i in range(removed)]
    body += [f"+\tnew_step_{i}(x);" for i in range(added)] + [" \treturn ret;"]
    return file_section(path, [hunk_lines(10, 10, body, f"static int {func}(struct foo *x)")])


def _split(n: int, parts: int, rng: random.Random) -> list[int]:
    cuts = sorted(rng.randint(0, n) for _ in range(parts - 1))
    return [b - a for a, b in zip([0] + cuts, cuts + [n])]


def generate_diff(files: list[tuple[str, int, int]], rng: random.Random) -> str:
    """Diff text with exactly the given (path, added, removed) per file.

    Bodies include awkward but valid lines: blank context lines, removed
    lines whose text starts with '-', added lines starting with '+', and
    "no newline" markers.
    """
    out = []
    for path, added, removed in files:
        new_file = removed == 0 and rng.random() < 0.2
        if new_file:
            body = [f"+line {i}" for i in range(added)]
            out.append(file_section(path, [hunk_lines(0, 1, body)], new_file=True))
            continue
        n_hunks = rng.randint(1, 3)
        adds, rems = _split(added, n_hunks, rng), _split(removed, n_hunks, rng)
        hunks = []
        line_no = 1
        for h in range(n_hunks):
            body = []
            for _ in range(rng.randint(0, 3)):
                body.append(rng.choice([" \tcontext();", "", " }"]))
            for i in range(rems[h]):
                body.append(rng.choice([f"-\tremoved_{h}_{i}();", f"-- comment {h}_{i}", f"-\t/* gone {i} */"]))
            for i in range(adds[h]):
                body.append(rng.choice([f"+\tadded_{h}_{i}();", f"++counter_{i};", f"+\tif (!p) return -{i};"]))
            body.append(" \treturn 0;")
            func = rng.choice(["", f"static int fn_{h}(void *arg)"])
            hunks.append(hunk_lines(line_no, line_no, body, func))
            if rng.random() < 0.1:
                hunks[-1].append("\\ No newline at end of file")
            line_no += 40
        out.append(file_section(path, hunks))
    return "".join(out)


def random_file_specs(rng: random.Random, max_files: int = 5) -> list[tuple[str, int, int]]:
    dirs = ["net/core", "net/nfc/nci", "fs/hfsplus", "drivers/net/usb", "kernel", "mm", "sound/core"]
    specs = []
    for i in range(rng.randint(1, max_files)):
        added, removed = rng.randint(0, 30), rng.randint(0, 30)
        if added + removed == 0:
            added = 1
        specs.append((f"{rng.choice(dirs)}/file_{i}.c", added, removed))
    return specs


def scan_changed_lines(text: str) -> int:
    """Independent count of '+'/'-' body lines: walks hunk headers by their lengths only."""
    import re

    total = 0
    old_left = new_left = 0
    for line in text.splitlines():
        if old_left > 0 or new_left > 0:
            if line.startswith("+"):
                total += 1
                new_left -= 1
            elif line.startswith("-"):
                total += 1
                old_left -= 1
            elif line.startswith("\\"):
                pass
            else:
                old_left -= 1
                new_left -= 1
            continue
        m = re.match(r"@@ -\d+,(\d+) \+\d+,(\d+) @@", line)
        if m:
            old_left, new_left = int(m.group(1)), int(m.group(2))
    return total


# reply forests


@dataclass
class Forest:
    messages: list[MailMessage]
    shapes: list  # expected root shapes, in root order
    series: dict[str, list[int]]  # normalized title -> versions


def random_forest(rng: random.Random, n: int, tag: str = "f") -> Forest:
    """A forest of patch threads: top-level submissions (some of them resends) and nested replies."""
    titles = [f"fix widget {tag} {i}" for i in range(rng.randint(1, 3))]
    next_version = {t: 1 for t in titles}
    msgs: list[MailMessage] = []
    parent_of: dict[str, str | None] = {}
    children: dict[str, list[str]] = {}
    subject_of: dict[str, str] = {}
    series: dict[str, list[int]] = {}
    for i in range(n):
        mid = f"{tag}.{i}@example.org"
        ts = T0 + 60 * i
        if i == 0 or rng.random() < 0.2:
            title = rng.choice(titles)
            v = next_version[title]
            next_version[title] += 1
            prefix = "[PATCH]" if v == 1 else f"[PATCH v{v}]"
            subject = f"{prefix} {title}"
            notes = f"Changes since v{v - 1}:\n- rebased\n\n" if v > 1 else ""
            body = f"Commit text {i}.\n\n{notes}---\n" + simple_diff(f"drivers/w/{tag}{i}.c")
            msgs.append(mail(mid, subject, body, ts, sender=DEV))
            parent_of[mid] = None
            subject_of[mid] = subject
            series.setdefault(" ".join(title.split()), []).append(v)
        else:
            parent = f"{tag}.{rng.randrange(i)}@example.org"
            chain = [parent]
            while parent_of[chain[-1]] is not None:
                chain.append(parent_of[chain[-1]])
            refs = list(reversed(chain))
            subject = "Re: " + subject_of[chain[-1]]
            body = rng.choice(["Please fix the race here.", "> quoted\nAgreed.", "Reviewed-by: X <x@example.org>"])
            in_reply_to = parent if rng.random() < 0.8 else None  # some mailers only send References
            msgs.append(MailMessage(mid, subject, REVIEWER, body, ts, in_reply_to, refs))
            parent_of[mid] = parent
            subject_of[mid] = subject_of[chain[-1]]
            children.setdefault(parent, []).append(mid)

    def shape(mid):
        return (mid, tuple(shape(c) for c in children.get(mid, [])))

    roots = [m.message_id for m in msgs if parent_of[m.message_id] is None]
    return Forest(msgs, [shape(r) for r in roots], {t: sorted(v) for t, v in series.items()})


# synthetic series


def _version(series_key: str, version: int, ts: int, diff: str, reviews: list[MailMessage], notes=None) -> PatchVersion:
    subject = f"[PATCH v{version}] {series_key}" if version > 1 else f"[PATCH] {series_key}"
    sub = MailMessage(f"{series_key.replace(' ', '-')}.v{version}@example.org", subject, DEV, "", ts)
    return PatchVersion(version, diff, sub, reviews, notes)


def reference_evolution_series() -> list[PatchSeries]:
    """1,600 two-version series whose review feedback encodes the reference per-category counts.

    Category c is raised on a contiguous (cyclic) run of the first 1,252
    transitions, one reviewer message per category carrying text that
    classifies to exactly c. The remaining transitions get only tag lines,
    thanks or bot mail. The first round(changelog% x count) transitions of
    each category acknowledge it in the v2 changelog; neutral notes pad the
    number of transitions with a changelog to 582.
    """
    cats: list[list[str]] = [[] for _ in range(REF_TRANSITIONS)]
    acked: list[list[str]] = [[] for _ in range(REF_TRANSITIONS)]
    offset = 0
    for cat, count, _, _, changelog in REF_EVOLUTION_ROWS:
        slots = [(offset + j) % REF_SUBSTANTIVE for j in range(count)]
        for s in slots:
            cats[s].append(cat)
        for s in slots[: round(changelog * count / 100)]:
            acked[s].append(cat)
        offset += count
    with_notes = sum(1 for a in acked if a)
    padding = REF_CHANGELOG - with_notes
    out = []
    for i in range(REF_TRANSITIONS):
        key = f"refevo series {i}"
        ts = T0 + i * DAY
        if cats[i]:
            reviews = [
                mail(f"r{i}.{j}@example.org", f"Re: [PATCH] {key}", f"Hi,\n\nPlease {LESSON_GUIDANCE[c]}.\n", ts + 60 + j)
                for j, c in enumerate(cats[i])
            ]
        else:
            kind = i % 3
            body = ["Reviewed-by: Maintainer A <maint.a@example.org>", "Thanks!", "Patch applied."][kind]
            sender = BOT if kind == 2 else REVIEWER
            reviews = [mail(f"r{i}.0@example.org", f"Re: [PATCH] {key}", body, ts + 60, sender=sender)]
        notes = None
        if acked[i]:
            notes = "\n".join(f"- {LESSON_GUIDANCE[c]}" for c in acked[i])
        elif padding > 0 and i >= REF_SUBSTANTIVE:
            notes = "- rebased onto the latest tree"
            padding -= 1
        v1 = _version(key, 1, ts, simple_diff("drivers/t/x.c", 1), reviews)
        v2 = _version(key, 2, ts + DAY // 2, simple_diff("drivers/t/x.c", 1 + i % 7), [], notes)
        out.append(PatchSeries(key, [v1, v2]))
    return out


CRASH_FUNCS = ["nci_rx_work", "hfsplus_bnode_create", "inet_autobind", "tcp_sendmsg", "ext4_fill_super",
               "usb_submit_urb", "kcov_remote_start", "l2tp_tunnel_register", "sock_close", "bpf_prog_run"]
CRASH_FILES = ["net/nfc/nci/core.c", "fs/hfsplus/bnode.c", "net/ipv4/af_inet.c", "net/ipv4/tcp.c", "fs/ext4/super.c",
               "drivers/usb/core/urb.c", "kernel/kcov.c", "net/l2tp/l2tp_core.c", "net/socket.c", "kernel/bpf/core.c"]
TITLES = ["KASAN: slab-use-after-free Read in {f}", "WARNING in {f}", "possible deadlock in {f}",
          "general protection fault in {f}", "KMSAN: uninit-value in {f}", "memory leak in {f}"]


def crash_report(title: str, frames: list[tuple[str, str]], salt: str = "") -> str:
    lines = [title, f"CPU: 0 PID: 1 Comm: syz-executor{salt} Not tainted 6.1.0-syzkaller #0", "Call Trace:"]
    lines += [f" {fn}+0x1a/0x40 {path}:{10 + k}" for k, (fn, path) in enumerate(frames)]
    return "\n".join(lines) + "\n"


def synthetic_bug(
    rng: random.Random,
    idx: int,
    versions: int,
    with_fix: bool = True,
    hostile_reviews: bool = False,
) -> BugRecord:
    """A fixed bug with a linked series of ``versions`` (0 = no series) and optional merged fix."""
    picks = rng.sample(range(len(CRASH_FUNCS)), 3)
    frames = [(CRASH_FUNCS[p], CRASH_FILES[p]) for p in picks]
    title = rng.choice(TITLES).format(f=frames[0][0])
    bug_id = f"{idx:04d}{rng.getrandbits(32):08x}"
    report = crash_report(title, frames, salt=f"{idx}.{bug_id}")
    crash = CrashInstance(report, title, frames, "int main(){}" if rng.random() < 0.5 else None, None, T0)
    bug = BugRecord(bug_id, title, "fixed", [crash], first_crash_time=T0)
    fix_path = rng.choice([frames[0][1], frames[1][1], "mm/slab.c", "include/linux/skbuff.h"])
    fix_diff = simple_diff(fix_path, rng.randint(1, 12), rng.randint(0, 4), func=frames[0][0])
    key = f"fix synthetic bug {idx}"
    if versions:
        vs = []
        for v in range(1, versions + 1):
            reviews = []
            if v < versions:
                cats = rng.sample(REVISION_CATEGORIES, rng.randint(0, 3))
                for j, c in enumerate(cats):
                    reviews.append(mail(f"s{idx}.v{v}.r{j}@example.org", f"Re: [PATCH] {key}",
                                        f"Please {LESSON_GUIDANCE[c]}.\n", T0 + v * DAY + j))
                if hostile_reviews:
                    # reviewers paste code; none of it may leak into targets
                    reviews.append(mail(f"s{idx}.v{v}.code@example.org", f"Re: [PATCH] {key}",
                                        "Try this instead, it fixes the race:\n+\tspin_lock(&l);\n-\tfoo();\n"
                                        "diff --git a/x.c b/x.c\n", T0 + v * DAY + 50))
            diff = simple_diff(fix_path if v == versions else frames[1][1], v * 3, 1, func=frames[0][0])
            notes = "- addressed review" if v > 1 else None
            vs.append(_version(key, v, T0 + v * DAY, diff, reviews, notes))
        bug.series = PatchSeries(key, vs)
    if with_fix:
        bug.merged_fix = MergedFix(f"{idx:040x}", f"{key}\n\nFix the crash.", fix_diff, T0, T0 + 40 * DAY)
        bug.fix_commit_time = T0 + 40 * DAY
    return bug
