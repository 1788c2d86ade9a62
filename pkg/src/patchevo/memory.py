"""Three-layer repair memory: per-bug entries, fix strategies / review lessons,
and an embedding index over crash reports.

The store is line-delimited JSON with a schema stamp, like the corpus::

    {"format": "patchevo-memory", "version": 1, "dim": 256, "embedder": "..."}
    {"kind": "entry", ..., "vector": [...]}
    {"kind": "strategy", ...}
    {"kind": "lesson", ...}
    {"kind": "concerns", "subsystem": "net", "categories": {...}}
"""

from __future__ import annotations

import json
import re
import zlib
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from pydantic import TypeAdapter

from .analyzers.base import lower_median
from .analyzers.classify import classify_bug_text, classify_revision_reasons, is_substantive_feedback, own_lines
from .analyzers.facts import bug_facts, primary_crash
from .diffs import subsystem_of
from .errors import CorpusVersionError, FormatError, InputError
from .models import BugRecord, Corpus
from .rules import DEFAULT_RULES, REVISION_CATEGORIES, RuleSet

MEMORY_FORMAT = "patchevo-memory"
MEMORY_VERSION = 1
DIM = 256
DEFAULT_K = 5
MAX_STRATEGIES = 5
MAX_LESSONS = 5
MAX_CONCERNS = 5
DEFAULT_BUDGET = 4000
MAX_EXCERPTS = 3
MAX_EXCERPT_CHARS = 240
EMBEDDER_NAME = "hashed-bigram (stand-in embedder)"

TOKEN_RE = re.compile(r"[A-Za-z0-9]+")

LESSON_GUIDANCE = {
    "correctness": "confirm the fix addresses the root cause of the failing condition",
    "commit_message": "describe the crash path in the commit message and add a Fixes tag",
    "api_design": "keep the fix inside the existing interface unless a helper change is justified",
    "race_condition": "verify teardown and publication ordering under concurrent access",
    "incomplete_fix": "check other callers and sibling paths that share the faulty pattern",
    "documentation": "update the code comments or documentation for the changed behaviour",
    "config_build": "build the change with the relevant Kconfig options, including disabled ones",
    "style_convention": "follow the subsystem coding style and naming conventions",
    "error_handling": "walk every error path so resources are released exactly once",
    "scope": "keep the patch minimal and move unrelated changes to a separate patch",
    "memory_safety": "check object lifetime, bounds and initialization to rule out use-after-free or out-of-bounds access",
    "performance": "avoid adding overhead to hot paths",
}


@dataclass
class BugMemoryEntry:
    bug_id: str
    bug_type: str
    crash_report: str
    top_frames: list[tuple[str, str]] = field(default_factory=list)
    implicated_files: list[str] = field(default_factory=list)
    subsystems: list[str] = field(default_factory=list)
    fix_patterns: list[str] = field(default_factory=list)
    locality: str | None = None
    difficulty_tier: str | None = None
    patch_lines: int | None = None
    final_diff: str = ""
    commit_message: str = ""
    revisions: int = 1
    top_reasons: list[str] = field(default_factory=list)
    excerpts: list[str] = field(default_factory=list)


@dataclass
class FixStrategy:
    bug_type: str
    fix_pattern: str
    frequency: int
    median_patch_size: int | None = None
    examples: list[str] = field(default_factory=list)
    pitfalls: list[tuple[str, int]] = field(default_factory=list)

    @property
    def key(self) -> tuple[str, str]:
        return (self.bug_type, self.fix_pattern)


@dataclass
class ReviewLesson:
    category: str
    prevalence: float
    guidance: str
    examples: list[str] = field(default_factory=list)


@dataclass
class RetrievalContext:
    predicted_bug_type: str
    similar_bugs: list[tuple[BugMemoryEntry, float]] = field(default_factory=list)
    strategies: list[FixStrategy] = field(default_factory=list)
    lessons: list[ReviewLesson] = field(default_factory=list)
    concerns: list[tuple[str, list[str]]] = field(default_factory=list)


# embedding


def tokenize(text: str) -> list[str]:
    return TOKEN_RE.findall((text or "").lower())


def bigrams(tokens: Sequence[str]) -> list[str]:
    return [f"{a} {b}" for a, b in zip(tokens, tokens[1:])]


def _bucket(gram: str, dim: int) -> int:
    return zlib.crc32(gram.encode("utf-8")) % dim


class HashedBigramEmbedder:
    """Bag of hashed token bigrams, L2-normalized.

    Text without any bigram maps to the first basis vector so that every
    vector has unit norm.
    """

    name = EMBEDDER_NAME

    def __init__(self, dim: int = DIM):
        self.dim = dim

    def __call__(self, text: str) -> np.ndarray:
        v = np.zeros(self.dim, dtype=np.float64)
        for g in bigrams(tokenize(text)):
            v[_bucket(g, self.dim)] += 1.0
        norm = float(np.linalg.norm(v))
        if norm == 0.0:
            v[0] = 1.0
            return v
        return v / norm


Embedder = Callable[[str], np.ndarray]


def embed(text: str, dim: int = DIM) -> np.ndarray:
    return HashedBigramEmbedder(dim)(text)


def _sim(x: float) -> float:
    # rounding absorbs float noise so exact duplicates compare equal and tie-break by id
    return min(1.0, max(-1.0, round(float(x), 12)))


class CosineIndex:
    """Exhaustive cosine scan over unit vectors."""

    def __init__(self, ids: Sequence[str], vectors: np.ndarray):
        self.ids = list(ids)
        vectors = np.asarray(vectors, dtype=np.float64)
        if self.ids:
            self.vectors = vectors.reshape(len(self.ids), -1)
        else:
            # reshape(0, -1) is ambiguous for numpy
            self.vectors = np.zeros((0, vectors.shape[-1] if vectors.ndim == 2 else 0))

    def __len__(self) -> int:
        return len(self.ids)

    def search(self, query: np.ndarray, k: int, exclude: Iterable[str] = ()) -> list[tuple[int, float]]:
        if not self.ids:
            return []
        skip = set(exclude)
        sims = self.vectors @ np.asarray(query, dtype=np.float64)
        order = sorted(
            (i for i in range(len(self.ids)) if self.ids[i] not in skip),
            key=lambda i: (-_sim(sims[i]), self.ids[i]),
        )
        return [(i, _sim(sims[i])) for i in order[:k]]


# building


def _excerpts(bug: BugRecord, rules: RuleSet) -> list[str]:
    """Up to three verbatim reviewer lines that carry a revision category."""
    out: list[str] = []
    if bug.series is None:
        return out
    for v in bug.series.versions:
        for m in v.review_messages:
            if not is_substantive_feedback(m, v.submission_message.subject, rules):
                continue
            for line in own_lines(m.body):
                s = line.strip()
                if s and classify_revision_reasons(s, rules) and s not in out:
                    out.append(s[:MAX_EXCERPT_CHARS])
                    if len(out) == MAX_EXCERPTS:
                        return out
    return out


def memory_entry(bug: BugRecord, rules: RuleSet = DEFAULT_RULES) -> BugMemoryEntry:
    facts = bug_facts(bug, rules)
    crash = primary_crash(bug)
    report = (crash.report_text or crash.crash_title) if crash else bug.title
    counts = facts.category_counts
    order = {c: i for i, c in enumerate(REVISION_CATEGORIES)}
    top = sorted(counts, key=lambda c: (-counts[c], order[c]))[:3]
    subsystems = sorted({subsystem_of(p, rules.subsystems) for p in facts.fixed_files})
    fix = bug.merged_fix
    return BugMemoryEntry(
        bug_id=bug.bug_id,
        bug_type=facts.bug_type,
        crash_report=report,
        top_frames=facts.frames[:5],
        implicated_files=facts.fixed_files,
        subsystems=subsystems,
        fix_patterns=facts.fix_patterns,
        locality=facts.locality.value if facts.locality else None,
        difficulty_tier=facts.difficulty.tier if facts.difficulty else None,
        patch_lines=facts.patch_lines,
        final_diff=fix.diff_text if fix else "",
        commit_message=fix.commit_message if fix else "",
        revisions=facts.revisions,
        top_reasons=top,
        excerpts=_excerpts(bug, rules),
    )


@dataclass
class MemoryStore:
    entries: list[BugMemoryEntry] = field(default_factory=list)
    strategies: list[FixStrategy] = field(default_factory=list)
    lessons: list[ReviewLesson] = field(default_factory=list)
    concerns: dict[str, dict[str, int]] = field(default_factory=dict)
    vectors: np.ndarray = field(default_factory=lambda: np.zeros((0, DIM)))
    dim: int = DIM
    embedder_name: str = EMBEDDER_NAME
    excluded: int = 0

    def __post_init__(self):
        self._by_id = {e.bug_id: e for e in self.entries}
        self.index = CosineIndex([e.bug_id for e in self.entries], self.vectors)

    def entry(self, bug_id: str) -> BugMemoryEntry:
        return self._by_id[bug_id]


def _strategies(entries: Sequence[BugMemoryEntry], cat_counts: dict[str, dict[str, int]]) -> list[FixStrategy]:
    groups: dict[tuple[str, str], list[BugMemoryEntry]] = defaultdict(list)
    for e in entries:
        for p in e.fix_patterns:
            groups[(e.bug_type, p)].append(e)
    out = []
    for (bug_type, pattern), members in groups.items():
        pitfalls: Counter = Counter()
        for e in members:
            pitfalls.update(set(cat_counts.get(e.bug_id, {})))
        order = {c: i for i, c in enumerate(REVISION_CATEGORIES)}
        out.append(
            FixStrategy(
                bug_type=bug_type,
                fix_pattern=pattern,
                frequency=len(members),
                median_patch_size=lower_median(e.patch_lines for e in members if e.patch_lines is not None),
                examples=sorted(e.bug_id for e in members)[:5],
                pitfalls=sorted(pitfalls.items(), key=lambda kv: (-kv[1], order[kv[0]])),
            )
        )
    out.sort(key=lambda s: (-s.frequency, s.key))
    return out


def _lessons(multi: dict[str, list[str]]) -> list[ReviewLesson]:
    """Lessons from the categories of multi-version bugs (bug_id -> categories)."""
    total = len(multi)
    seen: dict[str, list[str]] = defaultdict(list)
    for bug_id in sorted(multi):
        for c in multi[bug_id]:
            seen[c].append(bug_id)
    out = [
        ReviewLesson(c, len(seen[c]) / total, LESSON_GUIDANCE[c], seen[c][:3])
        for c in REVISION_CATEGORIES
        if c in seen
    ]
    out.sort(key=lambda l: (-l.prevalence, l.category))
    return out


def build_memory(
    corpus: Corpus, rules: RuleSet = DEFAULT_RULES, embedder: Embedder | None = None, dim: int = DIM
) -> MemoryStore:
    """One entry per fixed bug with a merged fix; other bugs are counted in ``excluded``."""
    embedder = embedder or HashedBigramEmbedder(dim)
    entries, excluded = [], 0
    cat_counts: dict[str, dict[str, int]] = {}
    multi: dict[str, list[str]] = {}
    for bug in sorted(corpus.bugs, key=lambda b: b.bug_id):
        if bug.status != "fixed" or bug.merged_fix is None:
            excluded += 1
            continue
        facts = bug_facts(bug, rules)
        cat_counts[bug.bug_id] = facts.category_counts
        if bug.series is not None and len(bug.series.versions) >= 2:
            multi[bug.bug_id] = facts.revision_categories
        entries.append(memory_entry(bug, rules))
    concerns: dict[str, Counter] = defaultdict(Counter)
    for e in entries:
        for s in e.subsystems:
            concerns[s].update(cat_counts[e.bug_id])
    if entries:
        vectors = np.array([embedder(e.crash_report) for e in entries], dtype=np.float64)
    else:
        vectors = np.zeros((0, dim))
    return MemoryStore(
        entries=entries,
        strategies=_strategies(entries, cat_counts),
        lessons=_lessons(multi),
        concerns={s: dict(sorted(c.items())) for s, c in sorted(concerns.items()) if c},
        vectors=vectors,
        dim=vectors.shape[1],
        embedder_name=getattr(embedder, "name", type(embedder).__name__),
        excluded=excluded,
    )


# retrieval


def _report_title(report: str) -> str:
    for line in (report or "").splitlines():
        if line.strip():
            return line.strip()
    return ""


def retrieve_context(
    store: MemoryStore,
    crash_report: str,
    k: int = DEFAULT_K,
    rules: RuleSet = DEFAULT_RULES,
    embedder: Embedder | None = None,
    exclude: Iterable[str] = (),
    max_strategies: int = MAX_STRATEGIES,
    max_lessons: int = MAX_LESSONS,
) -> RetrievalContext:
    """Classify, find neighbours, collect strategies, then lessons."""
    if k < 1:
        raise InputError("k must be at least 1")
    predicted = classify_bug_text(_report_title(crash_report), crash_report, rules)
    ctx = RetrievalContext(predicted_bug_type=predicted)
    if not store.entries:
        return ctx
    embedder = embedder or HashedBigramEmbedder(store.dim)
    hits = store.index.search(embedder(crash_report), k, exclude)
    ctx.similar_bugs = [(store.entries[i], s) for i, s in hits]

    types = {predicted} | {e.bug_type for e, _ in ctx.similar_bugs}
    strategies = [s for s in store.strategies if s.bug_type in types]
    strategies.sort(key=lambda s: (-s.frequency, s.key))
    ctx.strategies = strategies[:max_strategies]

    wanted = {c for e, _ in ctx.similar_bugs for c in e.top_reasons}
    for s in store.strategies:
        if s.bug_type == predicted:
            wanted |= {c for c, _ in s.pitfalls[:3]}
    ctx.lessons = [l for l in store.lessons if l.category in wanted][:max_lessons]

    order = {c: i for i, c in enumerate(REVISION_CATEGORIES)}
    seen = []
    for e, _ in ctx.similar_bugs:
        for sub in e.subsystems:
            if sub in store.concerns and sub not in seen:
                seen.append(sub)
    for sub in seen[:MAX_CONCERNS]:
        counts = store.concerns[sub]
        cats = sorted(counts, key=lambda c: (-counts[c], order[c]))[:3]
        ctx.concerns.append((sub, cats))
    return ctx


def _context_items(ctx: RetrievalContext) -> list[tuple[str, str]]:
    items = []
    for e, sim in ctx.similar_bugs:
        text = (
            f"- {e.bug_id} [{e.bug_type}] similarity {sim:.3f}; fix patterns: "
            f"{', '.join(e.fix_patterns) or 'none'}; locality: {e.locality or 'unknown'}; "
            f"tier: {e.difficulty_tier or 'unknown'}; versions: {e.revisions}\n"
        )
        if e.excerpts:
            text += f"  reviewer: {e.excerpts[0]}\n"
        items.append(("## Similar bugs\n", text))
    for s in ctx.strategies:
        size = "unknown" if s.median_patch_size is None else f"{s.median_patch_size} lines"
        pit = ", ".join(c for c, _ in s.pitfalls[:3]) or "none recorded"
        items.append(
            (
                "## Repair directions\n",
                f"- {s.fix_pattern} for {s.bug_type}: seen {s.frequency}x, median patch {size}; "
                f"review pitfalls: {pit}\n",
            )
        )
    for l in ctx.lessons:
        items.append(
            ("## Traps\n", f"- {l.category} ({100 * l.prevalence:.1f}% of revised fixes): {l.guidance}\n")
        )
    for sub, cats in ctx.concerns:
        items.append(("## Subsystem review concerns\n", f"- {sub}: {', '.join(cats)}\n"))
    return items


def format_context_block(ctx: RetrievalContext, budget: int = DEFAULT_BUDGET) -> str:
    """Render the context within ``budget`` characters.

    Items are appended whole, in section order, and rendering stops at the
    first item that does not fit, so a larger budget never drops an item.
    """
    header = f"# Repair context (predicted bug type: {ctx.predicted_bug_type})\n"
    if budget < len(header):
        return ""
    out = [header]
    used = len(header)
    section = None
    for sec, text in _context_items(ctx):
        piece = text if sec == section else "\n" + sec + text
        if used + len(piece) > budget:
            break
        out.append(piece)
        used += len(piece)
        section = sec
    return "".join(out)


# persistence

_ENTRY = TypeAdapter(BugMemoryEntry)
_STRATEGY = TypeAdapter(FixStrategy)
_LESSON = TypeAdapter(ReviewLesson)


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def serialize_memory(store: MemoryStore) -> str:
    lines = [
        _dumps(
            {
                "format": MEMORY_FORMAT,
                "version": MEMORY_VERSION,
                "dim": store.dim,
                "embedder": store.embedder_name,
                "excluded": store.excluded,
            }
        )
    ]
    for e, vec in zip(store.entries, store.vectors):
        lines.append(_dumps({"kind": "entry", **_ENTRY.dump_python(e, mode="json"), "vector": [float(x) for x in vec]}))
    for s in store.strategies:
        lines.append(_dumps({"kind": "strategy", **_STRATEGY.dump_python(s, mode="json")}))
    for l in store.lessons:
        lines.append(_dumps({"kind": "lesson", **_LESSON.dump_python(l, mode="json")}))
    for sub, cats in store.concerns.items():
        lines.append(_dumps({"kind": "concerns", "subsystem": sub, "categories": cats}))
    return "\n".join(lines) + "\n"


def save_memory(store: MemoryStore, path: str | Path) -> Path:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(serialize_memory(store), encoding="utf-8")
    tmp.replace(path)
    return path


def load_memory(path: str | Path) -> MemoryStore:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise InputError(f"cannot read memory store {path}: {exc}") from exc
    if not lines:
        raise FormatError(f"{path}: empty memory file")
    head = json.loads(lines[0])
    if head.get("format") != MEMORY_FORMAT:
        raise FormatError(f"{path}: not a memory store")
    if head.get("version") != MEMORY_VERSION:
        raise CorpusVersionError(f"{path}: memory schema version {head.get('version')!r} is not supported")
    entries, vectors, strategies, lessons, concerns = [], [], [], [], {}
    for lineno, line in enumerate(lines[1:], 2):
        if not line.strip():
            continue
        rec = json.loads(line)
        kind = rec.pop("kind", None)
        if kind == "entry":
            vectors.append(rec.pop("vector"))
            entries.append(_ENTRY.validate_python(rec))
        elif kind == "strategy":
            strategies.append(_STRATEGY.validate_python(rec))
        elif kind == "lesson":
            lessons.append(_LESSON.validate_python(rec))
        elif kind == "concerns":
            concerns[rec["subsystem"]] = rec["categories"]
        else:
            raise FormatError(f"{path}:{lineno}: unknown record kind {kind!r}")
    dim = head.get("dim", DIM)
    return MemoryStore(
        entries=entries,
        strategies=strategies,
        lessons=lessons,
        concerns=concerns,
        vectors=np.array(vectors, dtype=np.float64).reshape(len(entries), dim),
        dim=dim,
        embedder_name=head.get("embedder", EMBEDDER_NAME),
        excluded=head.get("excluded", 0),
    )
