"""Guidance-quality metrics: category precision / recall / F1 and diagnostic coverage."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .advisor import AdvisorSummary
from .analyzers.classify import classify_revision_reasons, is_substantive_feedback
from .errors import EvaluationError, InputError
from .models import MailMessage
from .rules import DEFAULT_RULES, REVISION_CATEGORIES, RuleSet
from .threads import ThreadNode, is_submission


@dataclass
class EvalLabels:
    case_id: str
    truth_categories: set[str] = field(default_factory=set)

    def __post_init__(self):
        unknown = set(self.truth_categories) - set(REVISION_CATEGORIES)
        if unknown:
            raise EvaluationError(f"case {self.case_id}: unknown categories {sorted(unknown)}")


@dataclass
class EvalScores:
    precision: float
    recall: float
    f1: float
    dcr: float | None
    case_count: int
    # macro averages over cases; reported for comparison only, not the headline figure
    macro_precision: float = 0.0
    macro_recall: float = 0.0
    macro_f1: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def _prf(tp: int, n_pred: int, n_truth: int) -> tuple[float, float, float]:
    # no predictions and nothing to find is a perfect score, not a zero
    p = tp / n_pred if n_pred else (1.0 if n_truth == 0 else 0.0)
    r = tp / n_truth if n_truth else (1.0 if n_pred == 0 else 0.0)
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f1


def coverage(pred: Iterable[str], truth: Iterable[str]) -> float | None:
    """|pred ∩ truth| / |truth|; None for empty truth."""
    truth = set(truth)
    if not truth:
        return None
    return len(set(pred) & truth) / len(truth)


def score_predictions(predictions: Mapping[str, Iterable[str]], labels: Sequence[EvalLabels]) -> EvalScores:
    truth = {l.case_id: set(l.truth_categories) for l in labels}
    pred = {k: set(v) for k, v in predictions.items()}
    missing_pred = sorted(set(truth) - set(pred))
    missing_truth = sorted(set(pred) - set(truth))
    if missing_pred or missing_truth:
        parts = []
        if missing_pred:
            parts.append(f"no prediction for: {', '.join(missing_pred)}")
        if missing_truth:
            parts.append(f"no label for: {', '.join(missing_truth)}")
        raise EvaluationError("case ids do not align; " + "; ".join(parts))
    cases = sorted(truth)
    tp = sum(len(pred[c] & truth[c]) for c in cases)
    n_pred = sum(len(pred[c]) for c in cases)
    n_truth = sum(len(truth[c]) for c in cases)
    p, r, f1 = _prf(tp, n_pred, n_truth)
    covs = [x for x in (coverage(pred[c], truth[c]) for c in cases) if x is not None]
    per_case = [_prf(len(pred[c] & truth[c]), len(pred[c]), len(truth[c])) for c in cases]
    n = len(cases)
    return EvalScores(
        precision=p,
        recall=r,
        f1=f1,
        dcr=sum(covs) / len(covs) if covs else None,
        case_count=n,
        macro_precision=sum(x[0] for x in per_case) / n if n else 0.0,
        macro_recall=sum(x[1] for x in per_case) / n if n else 0.0,
        macro_f1=sum(x[2] for x in per_case) / n if n else 0.0,
    )


def summary_dcr(summary: AdvisorSummary, truth: EvalLabels, rules: RuleSet = DEFAULT_RULES) -> float | None:
    return coverage(classify_revision_reasons(summary.text(), rules), truth.truth_categories)


def truth_from_messages(
    case_id: str, messages: Iterable[MailMessage], thread_subject: str | None = None, rules: RuleSet = DEFAULT_RULES
) -> EvalLabels:
    cats: set[str] = set()
    for m in messages:
        if is_submission(m):
            continue
        if is_substantive_feedback(m, thread_subject, rules):
            cats |= classify_revision_reasons(m.body, rules)
    return EvalLabels(case_id, cats)


def derive_ground_truth(
    case_threads: Mapping[str, Sequence[ThreadNode]], rules: RuleSet = DEFAULT_RULES
) -> list[EvalLabels]:
    """Union of review categories over the substantive replies in each case's threads."""
    out = []
    for case_id in sorted(case_threads):
        cats: set[str] = set()
        for root in case_threads[case_id]:
            msgs = [n.message for n in root.walk() if n is not root]
            cats |= truth_from_messages(case_id, msgs, root.message.subject, rules).truth_categories
        out.append(EvalLabels(case_id, cats))
    return out


# files: one {"case_id": ..., "categories": [...]} object per line


def _read_records(path: str | Path) -> list[dict]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise EvaluationError(f"{path}:{lineno}: invalid JSON: {exc.msg}") from exc
        if not isinstance(rec, dict) or "case_id" not in rec or not isinstance(rec.get("categories"), list):
            raise EvaluationError(f"{path}:{lineno}: expected {{case_id, categories}}")
        out.append(rec)
    return out


def read_predictions(path: str | Path) -> dict[str, set[str]]:
    out: dict[str, set[str]] = {}
    for rec in _read_records(path):
        cid = str(rec["case_id"])
        if cid in out:
            raise EvaluationError(f"{path}: duplicate case {cid}")
        out[cid] = set(rec["categories"])
    return out


def read_labels(path: str | Path) -> list[EvalLabels]:
    preds = read_predictions(path)
    return [EvalLabels(cid, cats) for cid, cats in preds.items()]


def write_labels(labels: Iterable[EvalLabels], path: str | Path) -> Path:
    path = Path(path)
    lines = [
        json.dumps({"case_id": l.case_id, "categories": [c for c in REVISION_CATEGORIES if c in l.truth_categories]})
        for l in labels
    ]
    path.write_text("".join(l + "\n" for l in lines), encoding="utf-8")
    return path
