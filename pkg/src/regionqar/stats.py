"""Corpus analytics: question-type taxonomy, summary statistics with
mergeable sufficient stats, box-size histograms, and a correlation helper.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .records import QarInstance, ReferenceMode, Region

FALLBACK_TYPE = "Others"
HISTOGRAM_BINS = 20

_TOKEN_RE = re.compile(r"[a-z0-9']+")


@dataclass(frozen=True)
class QuestionTypeRule:
    type_name: str
    patterns: tuple[str, ...]
    priority: int

    def __post_init__(self):
        object.__setattr__(self, "patterns", tuple(self.patterns))
        if any(p != p.lower() for p in self.patterns):
            raise ValueError(f"patterns must be lowercase: {self.patterns}")


def load_question_type_rules() -> list[QuestionTypeRule]:
    raw = json.loads(
        resources.files("regionqar.data").joinpath("question_types.json").read_text("utf-8")
    )
    rules = [
        QuestionTypeRule(type_name=r["type"], patterns=tuple(r["patterns"]), priority=r["priority"])
        for r in raw["rules"]
    ]
    priorities = [r.priority for r in rules]
    if len(set(priorities)) != len(priorities):
        raise ValueError("rule priorities must be unique")
    return sorted(rules, key=lambda r: r.priority)


def _tokens(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def _contains_ngram(tokens: list[str], pattern: str) -> bool:
    pat = _tokens(pattern)
    if not pat:
        return False
    return any(tokens[i : i + len(pat)] == pat for i in range(len(tokens) - len(pat) + 1))


def classify_question(question: str, rules: list[QuestionTypeRule] | None = None) -> str:
    """First rule (by priority) with any matching n-gram wins; else Others."""
    if rules is None:
        rules = load_question_type_rules()
    if not rules:
        raise ValueError("rules must be non-empty")
    tokens = _tokens(question)
    for rule in sorted(rules, key=lambda r: r.priority):
        if any(_contains_ngram(tokens, p) for p in rule.patterns):
            return rule.type_name
    return FALLBACK_TYPE


def token_length(text: str) -> int:
    """Whitespace token count; the corpus length unit everywhere."""
    return len(text.split())


@dataclass
class SummaryStats:
    """Sufficient statistics for a corpus shard; additive across shards."""

    image_ids: set = field(default_factory=set)
    qar_count: int = 0
    q_tokens: int = 0
    a_tokens: int = 0
    r_tokens: int = 0
    mentioned_ids: int = 0

    def add(self, instance: QarInstance) -> None:
        self.image_ids.add(instance.image_id)
        self.qar_count += 1
        self.q_tokens += token_length(instance.question)
        self.a_tokens += token_length(instance.answer)
        self.r_tokens += token_length(instance.rationale)
        self.mentioned_ids += len(instance.mentioned_ids)

    def merge(self, other: "SummaryStats") -> "SummaryStats":
        return SummaryStats(
            image_ids=self.image_ids | other.image_ids,
            qar_count=self.qar_count + other.qar_count,
            q_tokens=self.q_tokens + other.q_tokens,
            a_tokens=self.a_tokens + other.a_tokens,
            r_tokens=self.r_tokens + other.r_tokens,
            mentioned_ids=self.mentioned_ids + other.mentioned_ids,
        )

    def to_report(self) -> dict:
        n = self.qar_count
        return {
            "images": len(self.image_ids),
            "qars": n,
            "qars_per_image": n / len(self.image_ids) if self.image_ids else 0.0,
            "avg_question_tokens": self.q_tokens / n if n else 0.0,
            "avg_answer_tokens": self.a_tokens / n if n else 0.0,
            "avg_rationale_tokens": self.r_tokens / n if n else 0.0,
            "avg_mentioned_ids": self.mentioned_ids / n if n else 0.0,
        }


def corpus_summary(instances: list[QarInstance]) -> dict:
    """Per-mode and total corpus statistics; empty input gets a flag."""
    per_mode = {mode: SummaryStats() for mode in ReferenceMode}
    total = SummaryStats()
    for instance in instances:
        per_mode[instance.mode].add(instance)
        total.add(instance)
    question_types: dict[str, int] = {}
    rules = load_question_type_rules()
    for instance in instances:
        t = classify_question(instance.question, rules)
        question_types[t] = question_types.get(t, 0) + 1
    return {
        "empty": not instances,
        "total": total.to_report(),
        "with_region_ids": per_mode[ReferenceMode.ID_BASED].to_report(),
        "with_region_descriptions": per_mode[ReferenceMode.DESCRIPTION_BASED].to_report(),
        "question_types": dict(sorted(question_types.items(), key=lambda kv: (-kv[1], kv[0]))),
    }


@dataclass(frozen=True)
class BoxHistograms:
    """Normalized 20-bin histograms over [0,1] for box width, height, area."""

    width: tuple[float, ...]
    height: tuple[float, ...]
    area: tuple[float, ...]


def _histogram(values: list[float]) -> tuple[float, ...]:
    counts = np.zeros(HISTOGRAM_BINS, dtype=np.float64)
    for v in values:
        idx = min(int(v * HISTOGRAM_BINS), HISTOGRAM_BINS - 1)
        counts[idx] += 1
    total = counts.sum()
    if total > 0:
        counts = counts / total
    return tuple(counts.tolist())


def bbox_histograms(regions: list[Region]) -> BoxHistograms:
    return BoxHistograms(
        width=_histogram([r.box.w for r in regions]),
        height=_histogram([r.box.h for r in regions]),
        area=_histogram([r.box.area for r in regions]),
    )


def write_histogram_csv(hist: BoxHistograms, path) -> None:
    import csv

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_low", "bin_high", "width", "height", "area"])
        for i in range(HISTOGRAM_BINS):
            writer.writerow([
                i / HISTOGRAM_BINS, (i + 1) / HISTOGRAM_BINS,
                hist.width[i], hist.height[i], hist.area[i],
            ])


@dataclass(frozen=True)
class PearsonResult:
    rho: float | None
    n: int

    @property
    def defined(self) -> bool:
        return self.rho is not None


def pearson(xs, ys) -> PearsonResult:
    """Sample Pearson correlation; zero variance in either series is flagged
    as undefined rather than raising."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise ValueError("need two equal-length series with at least 2 points")
    dx = x - x.mean()
    dy = y - y.mean()
    denom = np.sqrt((dx**2).sum() * (dy**2).sum())
    if denom == 0:
        return PearsonResult(rho=None, n=x.size)
    return PearsonResult(rho=float((dx * dy).sum() / denom), n=x.size)


def format_summary_table(summary: dict) -> str:
    rows = [
        ("images", "{images}"),
        ("qars", "{qars}"),
        ("qars per image", "{qars_per_image:.2f}"),
        ("avg question tokens", "{avg_question_tokens:.2f}"),
        ("avg answer tokens", "{avg_answer_tokens:.2f}"),
        ("avg rationale tokens", "{avg_rationale_tokens:.2f}"),
        ("avg mentioned ids", "{avg_mentioned_ids:.2f}"),
    ]
    columns = ("total", "with_region_ids", "with_region_descriptions")
    header = f"{'metric':<24}" + "".join(f"{c:>28}" for c in columns)
    lines = [header]
    for label, fmt in rows:
        cells = [fmt.format(**summary[c]) for c in columns]
        lines.append(f"{label:<24}" + "".join(f"{cell:>28}" for cell in cells))
    return "\n".join(lines)
