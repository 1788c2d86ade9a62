from __future__ import annotations

import json
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass, field
from typing import Any, Iterable

from ..errors import UnknownAnalyzerError
from ..models import Corpus
from ..rules import DEFAULT_RULES, RuleSet


@dataclass
class AnalysisResult:
    name: str
    summary: dict[str, Any] = field(default_factory=dict)
    details: list[dict[str, Any]] = field(default_factory=list)
    tables: dict[str, list[dict]] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=1, ensure_ascii=False) + "\n"


class BaseAnalyzer(ABC):
    @property
    @abstractmethod
    def name(self) -> str: ...

    @abstractmethod
    def analyze(self, corpus: Corpus, rules: RuleSet = DEFAULT_RULES) -> AnalysisResult: ...


REGISTRY: dict[str, type[BaseAnalyzer]] = {}


def register(cls: type[BaseAnalyzer]) -> type[BaseAnalyzer]:
    REGISTRY[cls.analyzer_id] = cls
    return cls


def pct(count: int, total: int) -> float:
    return round(100.0 * count / total, 1) if total else 0.0


def lower_median(values: Iterable[float]):
    vals = sorted(values)
    if not vals:
        return None
    return vals[(len(vals) - 1) // 2]


def run_analyzers(
    corpus: Corpus, analyzer_ids: Iterable[str], rules: RuleSet = DEFAULT_RULES
) -> list[AnalysisResult]:
    """Run the named analyzers over one corpus snapshot, in the order given."""
    ids = list(analyzer_ids)
    unknown = [a for a in ids if a not in REGISTRY]
    if unknown:
        raise UnknownAnalyzerError(
            f"unknown analyzer(s) {', '.join(unknown)}; registered: {', '.join(sorted(REGISTRY))}"
        )
    return [REGISTRY[a]().analyze(corpus, rules) for a in ids]
