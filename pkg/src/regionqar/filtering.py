"""Threshold filtering of scored instances and the quality/size trade-off
analytics around it: precision-vs-retention curves, a random-retention
baseline, and the descriptor ablation harness.

Filtering keeps instances with score strictly above the threshold, so the
retained set can only shrink as the threshold rises.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .records import CriticScore
from .verbalize import DESCRIPTOR_SECTIONS

DEFAULT_THRESHOLD = 0.8
DEFAULT_CURVE_THRESHOLDS = tuple(round(0.05 * i, 2) for i in range(20))  # 0.0 .. 0.95

# "global" is shorthand for both image-level text descriptor sections
DESCRIPTOR_ALIASES = {"global": ("concepts", "narratives")}


@dataclass(frozen=True)
class ThresholdCurvePoint:
    threshold: float
    retained_count: int
    retained_fraction: float
    precision: float | None  # None when nothing was retained

    @property
    def precision_defined(self) -> bool:
        return self.precision is not None

    def to_json_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "retained_count": self.retained_count,
            "retained_fraction": self.retained_fraction,
            "precision": self.precision,
        }


def filter_by_threshold(scores: list[CriticScore], threshold: float) -> list[str]:
    """Instance ids with score strictly above the threshold, order preserved."""
    return [s.instance_id for s in scores if s.score > threshold]


def precision_curve(
    scores: list[CriticScore],
    accept_by_id: dict[str, int],
    thresholds=DEFAULT_CURVE_THRESHOLDS,
) -> list[ThresholdCurvePoint]:
    """Precision of the retained set at each threshold; every scored
    instance must carry a binary acceptability label."""
    missing = [s.instance_id for s in scores if s.instance_id not in accept_by_id]
    if missing:
        raise KeyError(f"scored instances without labels: {missing[:5]}")
    total = len(scores)
    points = []
    for threshold in thresholds:
        retained = [s for s in scores if s.score > threshold]
        if retained:
            accepted = sum(accept_by_id[s.instance_id] for s in retained)
            precision = accepted / len(retained)
        else:
            precision = None
        points.append(ThresholdCurvePoint(
            threshold=float(threshold),
            retained_count=len(retained),
            retained_fraction=len(retained) / total if total else 0.0,
            precision=precision,
        ))
    return points


def random_baseline(
    accept_labels,
    fractions,
    seed: int = 0,
    repetitions: int = 1000,
) -> list[ThresholdCurvePoint]:
    """Mean precision of uniformly random retention at each fraction.

    Random filtering should not move acceptability: the mean stays at the
    base rate no matter how much is discarded.
    """
    labels = np.asarray(accept_labels, dtype=np.float64)
    if labels.size == 0:
        raise ValueError("labels must be non-empty")
    rng = np.random.default_rng(seed)
    n = labels.size
    points = []
    for fraction in fractions:
        k = int(round(fraction * n))
        if k == 0:
            points.append(ThresholdCurvePoint(
                threshold=float(fraction), retained_count=0,
                retained_fraction=0.0, precision=None,
            ))
            continue
        means = [labels[rng.choice(n, size=k, replace=False)].mean() for _ in range(repetitions)]
        points.append(ThresholdCurvePoint(
            threshold=float(fraction),
            retained_count=k,
            retained_fraction=k / n,
            precision=float(np.mean(means)),
        ))
    return points


def expand_descriptor_mask(names) -> tuple[str, ...]:
    """Resolve descriptor names (with the "global" alias) into sections,
    keeping the canonical section order."""
    chosen = set()
    for name in names:
        if name in DESCRIPTOR_ALIASES:
            chosen.update(DESCRIPTOR_ALIASES[name])
        elif name in DESCRIPTOR_SECTIONS:
            chosen.add(name)
        else:
            raise ValueError(f"unknown descriptor section: {name!r}")
    return tuple(s for s in DESCRIPTOR_SECTIONS if s in chosen)


def descriptor_ablation_score(
    images,
    bundles,
    descriptor_mask,
    generation_cfg,
    llm_backend,
    scorer,
) -> tuple[float, int]:
    """Regenerate QARs with only the given descriptor sections in the
    prompt and return (mean critic score, instance count).

    ``scorer`` maps (instance, bundle) -> float; ``descriptor_mask`` names
    the sections to keep and must be non-empty.
    """
    from .generate import generate_for_image

    sections = expand_descriptor_mask(descriptor_mask)
    if not sections:
        raise ValueError("descriptor mask selects no sections")
    scores = []
    bundles_by_id = {b.image_id: b for b in bundles}
    for image in images:
        bundle = bundles_by_id[image.image_id]
        result = generate_for_image(bundle, image, generation_cfg, llm_backend,
                                    descriptors=sections)
        for instance in result.instances:
            scores.append(scorer(instance, bundle))
    if not scores:
        return 0.0, 0
    return float(np.mean(scores)), len(scores)


def write_curve_csv(points: list[ThresholdCurvePoint], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "retained_count", "retained_fraction", "precision"])
        for p in points:
            writer.writerow([
                p.threshold, p.retained_count, p.retained_fraction,
                "" if p.precision is None else p.precision,
            ])


def write_curve_json(points: list[ThresholdCurvePoint], path: str | Path) -> None:
    Path(path).write_text(
        json.dumps([p.to_json_dict() for p in points], indent=2) + "\n", encoding="utf-8"
    )


def format_curve_table(points: list[ThresholdCurvePoint]) -> str:
    lines = [f"{'threshold':>10} {'retained':>10} {'fraction':>10} {'precision':>10}"]
    for p in points:
        precision = "undef" if p.precision is None else f"{p.precision:.4f}"
        lines.append(
            f"{p.threshold:>10.2f} {p.retained_count:>10d} "
            f"{p.retained_fraction:>10.4f} {precision:>10}"
        )
    return "\n".join(lines)
