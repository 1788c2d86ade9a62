"""Editable rule tables used by the classifiers.

Every table ships with defaults and can be replaced from a directory of
plain-text rule files. All files share one line format::

    # comment
    key: value

Keys may repeat; order is preserved (first-match-wins tables depend on it).

Files looked up in a rules directory:

=========================  =========================================================
bug_types.rules            ``bug-type: regex`` matched against crash title, then report
fix_patterns.rules         ``pattern-id: field regex`` with field in added/removed/message,
                           or ``pattern-id: moved`` for statements moved within a file
revision_keywords.rules    ``category: regex`` (case-insensitive)
bots.rules                 ``bot: regex`` on the sender; ``stable: regex`` on the subject
difficulty.rules           ``factor: t1 t2 ...`` upper bounds of each penalty bucket
subsystems.map             ``path-prefix -> subsystem-id``
=========================  =========================================================
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

from .diffs import DEFAULT_SUBSYSTEMS, SubsystemMap
from .errors import InputError

REVISION_CATEGORIES = (
    "correctness",
    "commit_message",
    "api_design",
    "race_condition",
    "incomplete_fix",
    "documentation",
    "config_build",
    "style_convention",
    "error_handling",
    "scope",
    "memory_safety",
    "performance",
)

# Ten categories observed as most frequent, then ten defaults of our own.
# Order is the match order: specific signatures before the catch-all WARNING / BUG.
DEFAULT_BUG_TYPES: list[tuple[str, str]] = [
    ("use-after-free", r"KASAN: [\w-]*use-after-free"),
    ("out-of-bounds-write", r"KASAN: [\w-]*out-of-bounds Write"),
    ("out-of-bounds-read", r"KASAN: [\w-]*out-of-bounds(?: Read)?"),
    ("info-leak", r"(?i)kernel-infoleak|infoleak"),
    ("uninit-value", r"KMSAN: uninit-value|uninit-value"),
    ("data-race", r"KCSAN: data-race"),
    ("memory-leak", r"memory leak in"),
    ("deadlock", r"possible deadlock|circular locking|possible recursive locking"),
    ("lockdep-warning", r"suspicious RCU usage|bad unlock balance|held lock freed|lock held when returning|inconsistent lock state"),
    ("refcount-bug", r"refcount bug|refcount_t: "),
    ("unregister-warning", r"unregister_netdevice: waiting"),
    ("task-hung", r"INFO: task hung|task .* blocked for more than"),
    ("rcu-stall", r"(?i)rcu detected stall|rcu_\w+ detected stalls|INFO: rcu .*stall"),
    ("soft-lockup", r"(?i)soft lockup"),
    ("stack-overflow", r"(?i)kernel stack overflow|stack guard page was hit|corrupted stack end"),
    ("bad-page-state", r"Bad page state|Bad page map"),
    ("divide-error", r"(?i)divide error"),
    ("null-ptr-deref", r"null-ptr-deref|NULL pointer dereference|general protection fault"),
    ("kernel-bug", r"kernel BUG|^BUG: "),
    ("warning", r"WARNING|WARN_ON"),
]

# (pattern id, field, regex). field "moved" has no regex.
DEFAULT_FIX_PATTERNS: list[tuple[str, str, str]] = [
    ("fix-order", "moved", ""),
    ("fix-order", "message", r"(?i)\breorder|\bwrong order\b|\border of\b|\bmove \S+ (before|after)\b"),
    ("add-init", "added", r"^\s*[\w.\->\[\]]+\s*=\s*(0|0U|0UL|NULL|false|\{\s*0?\s*\})\s*;"),
    ("add-init", "added", r"\b(memset|kzalloc|kcalloc|INIT_LIST_HEAD|INIT_WORK|spin_lock_init|mutex_init|init_waitqueue_head)\s*\("),
    ("add-init", "message", r"(?i)\buninit|\binitiali[sz]e"),
    ("add-null-check", "added", r"if\s*\(\s*!\s*[\w.\->\[\]]+\s*\)|==\s*NULL|!=\s*NULL|IS_ERR_OR_NULL\s*\("),
    ("add-null-check", "message", r"(?i)null[- ]ptr|null pointer"),
    ("add-lock", "added", r"\b(spin_lock|spin_unlock|mutex_lock|mutex_unlock|read_lock|write_lock|lock_sock|release_sock|rcu_read_lock|down_read|down_write)\w*\s*\("),
    ("add-bounds-check", "added", r"if\s*\(.*(>=|<=|>|<)\s*(ARRAY_SIZE\s*\(|[A-Z_]*MAX\b|\w*(len|size|count|num)\b)"),
    ("add-bounds-check", "message", r"(?i)out[- ]of[- ]bounds|bounds check"),
    ("fix-error-path", "added", r"\bgoto\s+(err|out|fail|free|unlock|put|release)\w*\s*;"),
    ("fix-error-path", "message", r"(?i)\berror path\b|\berror handling\b|\bon failure\b"),
    ("add-refcount", "added", r"\b(refcount_inc|refcount_dec|kref_get|kref_put|sock_hold|sock_put|dev_hold|dev_put|get_device|put_device|\w+_get|\w+_put)\s*\("),
    ("add-refcount", "message", r"(?i)\brefcount|\breference count"),
    ("fix-lifetime", "added", r"\b(synchronize_rcu|call_rcu|kfree_rcu|cancel_work_sync|cancel_delayed_work_sync|flush_work|flush_workqueue|del_timer_sync|timer_shutdown_sync)\s*\("),
    ("fix-lifetime", "message", r"(?i)\blifetime\b"),
    ("revert", "message", r"^Revert \"|This reverts commit"),
    ("add-size-check", "added", r"if\s*\(.*\b(sizeof\s*\(|\w*_len\b|\blen\b|\w*size\b).*(<|>)"),
    ("add-size-check", "message", r"(?i)\b(size|length) check|\btoo (short|small)\b"),
]

FIX_PATTERN_IDS = (
    "fix-order",
    "add-init",
    "add-null-check",
    "add-lock",
    "add-bounds-check",
    "fix-error-path",
    "add-refcount",
    "fix-lifetime",
    "revert",
    "add-size-check",
)

DEFAULT_REVISION_KEYWORDS: list[tuple[str, str]] = [
    ("correctness", r"\bincorrect\b|\bwrong\b|\bnot correct\b|\bnot right\b|\bbroken\b|\bbogus\b|\bdoes(n't| not) (fix|work)\b|\broot cause\b"),
    ("commit_message", r"\bcommit (message|log|description|msg)\b|\breword|\bsubject line\b|\bfixes:? tag\b|\bchangelog\b"),
    ("api_design", r"\bapi\b|\binterface\b|\bhelper\b|\bwrapper\b|\bcallback\b|\bsemantics\b|\bfunction signature\b"),
    ("race_condition", r"\brac(e|es|ed|y|ing)\b|\bconcurren(t|cy)\b|\block(s|ed|ing)?\b|\bordering\b|\bsynchroni[sz]|\brcu\b|\bmemory barrier|\bdeadlock"),
    ("incomplete_fix", r"\bincomplete\b|\bnot (enough|sufficient)\b|\bpartial(ly)?\b|\bother (callers|places|paths|users)\b|\bpapers? over\b|\bsymptom\b|\bdoes(n't| not) (fully|completely)\b"),
    ("documentation", r"\bdocument(ation|ed)?\b|\bkernel-doc\b|\bcode comment|\badd a comment\b"),
    ("config_build", r"\bkconfig\b|\bCONFIG_\w+|\bbuild (error|failure|warning|fails?)\b|\bcompil(e|er|ation) (error|warning|fails?)\b|\bdoes(n't| not) (build|compile)\b|\bmakefile\b"),
    ("style_convention", r"\bcoding style\b|\bstyle\b|\bcheckpatch\b|\bindent(ation)?\b|\bwhitespace\b|\bnaming\b|\bconvention\b|\bnit\b|\bxmas tree\b"),
    ("error_handling", r"\berror (path|handling|code|case)s?\b|\berr path\b|\breturn (value|code)\b|\bunwind|\bgoto (err|out)|\bon failure\b"),
    ("scope", r"\bscope\b|\bunrelated\b|\bseparate patch\b|\bsplit (this|it|the patch)\b|\btoo (big|large|broad)\b|\bwrong tree\b"),
    ("memory_safety", r"\buse[- ]after[- ]free\b|\buaf\b|\bdouble[- ]free\b|\bout[- ]of[- ]bounds\b|\boverflow\b|\buninit(iali[sz]ed)?\b|\bdangling\b|\bmemory corruption\b|\bnull (pointer|deref)"),
    ("performance", r"\bperformance\b|\boverhead\b|\bhot ?path\b|\bfast ?path\b|\bexpensive\b|\blatency\b|\bthroughput\b|\bcache ?line\b"),
]

DEFAULT_BOTS: list[tuple[str, str]] = [
    ("bot", r"(?i)syzbot|syzkaller\.appspotmail\.com"),
    ("bot", r"(?i)lkp@intel\.com|kernel test robot"),
    ("bot", r"(?i)patchwork-bot|patchwork@|noreply|no-reply|\bbot\b|-bot@|\bci@"),
    ("stable", r"(?i)\[PATCH [0-9]+\.[0-9]+|\[PATCH (AUTOSEL|stable)|\bstable-\d|FAILED: patch|has been added to the .*stable|stable@vger\.kernel\.org"),
]

DEFAULT_DIFFICULTY: dict[str, tuple[float, ...]] = {
    # upper bound (inclusive) of penalty bucket 0, 1, ...; values above the last bound get len(bounds)
    "patch_lines": (10, 50, 150),
    "files": (1, 3),
    "revisions": (1, 3),
    "days_to_fix": (30, 90, 180),
}


def read_rule_lines(path: str | Path) -> list[tuple[str, str]]:
    pairs = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition(":")
        if not sep or not key.strip():
            raise ValueError(f"{path}:{lineno}: expected 'key: value'")
        pairs.append((key.strip(), value.strip()))
    return pairs


def dump_rule_lines(pairs) -> str:
    return "".join(f"{key}: {value}\n" for key, value in pairs)


@dataclass
class FixPatternRule:
    pattern_id: str
    field: str
    regex: re.Pattern | None


@dataclass
class RuleSet:
    bug_types: list[tuple[str, re.Pattern]] = field(default_factory=list)
    fix_patterns: list[FixPatternRule] = field(default_factory=list)
    revision_keywords: dict[str, list[re.Pattern]] = field(default_factory=dict)
    bot_senders: list[re.Pattern] = field(default_factory=list)
    stable_markers: list[re.Pattern] = field(default_factory=list)
    difficulty: dict[str, tuple[float, ...]] = field(default_factory=dict)
    subsystems: SubsystemMap = DEFAULT_SUBSYSTEMS

    @classmethod
    def default(cls) -> "RuleSet":
        rs = cls()
        rs.set_bug_types(DEFAULT_BUG_TYPES)
        rs.set_fix_patterns([(p, f"{f} {r}".strip()) for p, f, r in DEFAULT_FIX_PATTERNS])
        rs.set_revision_keywords(DEFAULT_REVISION_KEYWORDS)
        rs.set_bots(DEFAULT_BOTS)
        rs.difficulty = dict(DEFAULT_DIFFICULTY)
        return rs

    @classmethod
    def load(cls, directory: str | Path | None) -> "RuleSet":
        """Defaults, with any rule file present in ``directory`` replacing its table."""
        if directory is None:
            return cls.default()
        d = Path(directory)
        if not d.is_dir():
            raise InputError(f"rules directory {directory} does not exist")
        try:
            return cls._load(d)
        except (ValueError, re.error) as exc:
            raise InputError(f"bad rule file in {directory}: {exc}") from exc

    @classmethod
    def _load(cls, d: Path) -> "RuleSet":
        rs = cls.default()
        if (d / "bug_types.rules").exists():
            rs.set_bug_types(read_rule_lines(d / "bug_types.rules"))
        if (d / "fix_patterns.rules").exists():
            rs.set_fix_patterns(read_rule_lines(d / "fix_patterns.rules"))
        if (d / "revision_keywords.rules").exists():
            rs.set_revision_keywords(read_rule_lines(d / "revision_keywords.rules"))
        if (d / "bots.rules").exists():
            rs.set_bots(read_rule_lines(d / "bots.rules"))
        if (d / "difficulty.rules").exists():
            for key, value in read_rule_lines(d / "difficulty.rules"):
                if key not in DEFAULT_DIFFICULTY:
                    raise ValueError(f"unknown difficulty factor {key!r}")
                rs.difficulty[key] = tuple(float(v) for v in value.split())
        if (d / "subsystems.map").exists():
            rs.subsystems = SubsystemMap.from_file(d / "subsystems.map")
        return rs

    def set_bug_types(self, pairs) -> None:
        self.bug_types = [(name, re.compile(rx, re.MULTILINE)) for name, rx in pairs]

    def set_fix_patterns(self, pairs) -> None:
        rules = []
        for pid, spec in pairs:
            fld, _, rx = spec.partition(" ")
            if fld not in ("added", "removed", "message", "moved"):
                raise ValueError(f"fix pattern {pid!r}: unknown field {fld!r}")
            rules.append(FixPatternRule(pid, fld, re.compile(rx.strip(), re.MULTILINE) if fld != "moved" else None))
        self.fix_patterns = rules

    def set_revision_keywords(self, pairs) -> None:
        table: dict[str, list[re.Pattern]] = {c: [] for c in REVISION_CATEGORIES}
        for cat, rx in pairs:
            if cat not in table:
                raise ValueError(f"unknown revision category {cat!r}")
            table[cat].append(re.compile(rx, re.IGNORECASE))
        self.revision_keywords = table

    def set_bots(self, pairs) -> None:
        self.bot_senders = [re.compile(rx) for key, rx in pairs if key == "bot"]
        self.stable_markers = [re.compile(rx) for key, rx in pairs if key == "stable"]

    @property
    def bug_type_ids(self) -> list[str]:
        seen: list[str] = []
        for name, _ in self.bug_types:
            if name not in seen:
                seen.append(name)
        return seen

    @property
    def fix_pattern_ids(self) -> list[str]:
        seen: list[str] = []
        for rule in self.fix_patterns:
            if rule.pattern_id not in seen:
                seen.append(rule.pattern_id)
        return seen


DEFAULT_RULES = RuleSet.default()


def write_default_rules(directory: str | Path) -> None:
    """Write the built-in tables out as editable rule files."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    (d / "bug_types.rules").write_text(dump_rule_lines(DEFAULT_BUG_TYPES))
    (d / "fix_patterns.rules").write_text(
        dump_rule_lines((p, f"{f} {r}".strip()) for p, f, r in DEFAULT_FIX_PATTERNS)
    )
    (d / "revision_keywords.rules").write_text(dump_rule_lines(DEFAULT_REVISION_KEYWORDS))
    (d / "bots.rules").write_text(dump_rule_lines(DEFAULT_BOTS))
    (d / "difficulty.rules").write_text(
        dump_rule_lines((k, " ".join(f"{v:g}" for v in vs)) for k, vs in DEFAULT_DIFFICULTY.items())
    )
