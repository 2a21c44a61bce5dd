"""Downsample detector proposals (up to 300 per image) to the few most
interesting regions.

The reduction applies five rules in order:
  (a) keep at most ``max_people`` person boxes, largest/most central first;
  (b) rank everything else by size/centrality blended with a rarity weight
      that favors infrequently-detected classes;
  (c) cap the number of regions of any single non-person class;
  (d) greedily suppress overlapping boxes (IoU above threshold), keeping
      the higher-scored one;
  (e) truncate to ``max_regions`` and re-index 0..n-1 in descending score.

Everything is deterministic: score ties break by detector confidence then
class label, and the remaining order is the input order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .records import BoxGeometry, Region

PERSON_LABEL = "person"


@dataclass(frozen=True)
class RawProposal:
    box: BoxGeometry
    class_label: str
    confidence: float
    class_prior_frequency: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence out of [0,1]: {self.confidence}")
        if self.class_prior_frequency < 0:
            raise ValueError(f"class_prior_frequency must be >= 0: {self.class_prior_frequency}")

    @property
    def is_person(self) -> bool:
        return self.class_label.lower() == PERSON_LABEL

    @classmethod
    def from_json_dict(cls, d: dict) -> "RawProposal":
        return cls(
            box=BoxGeometry.from_json_dict(d["box"]),
            class_label=d["class_label"],
            confidence=d["confidence"],
            class_prior_frequency=d.get("class_prior_frequency", 0.0),
        )


@dataclass(frozen=True)
class CurationConfig:
    max_people: int = 4
    per_class_cap: int = 2
    overlap_iou: float = 0.7
    max_regions: int = 10
    size_centrality_blend: float = 0.5  # alpha: 1 = pure size, 0 = pure centrality
    rarity_temperature: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.size_centrality_blend <= 1.0:
            raise ValueError("size_centrality_blend must be in [0,1]")
        if self.rarity_temperature <= 0:
            raise ValueError("rarity_temperature must be positive")


# Farthest any box center can sit from the image center (a corner).
_MAX_CENTER_DIST = math.sqrt(0.5)


def iou(a: BoxGeometry, b: BoxGeometry) -> float:
    """Intersection-over-union of two normalized boxes."""
    ix = max(0.0, min(a.x + a.w, b.x + b.w) - max(a.x, b.x))
    iy = max(0.0, min(a.y + a.h, b.y + b.h) - max(a.y, b.y))
    inter = ix * iy
    union = a.area + b.area - inter
    return inter / union


def region_score(p: RawProposal, alpha: float = 0.5) -> float:
    """Blend of normalized area and centrality, both in [0,1]."""
    cx, cy = p.box.center
    dist = math.hypot(cx - 0.5, cy - 0.5)
    centrality = 1.0 - dist / _MAX_CENTER_DIST
    return alpha * p.box.area + (1.0 - alpha) * centrality


def rarity_weight(class_prior_frequency: float, temperature: float = 1.0) -> float:
    """Deterministic stand-in for rarity oversampling: 1 at frequency 0,
    decaying with how often the class is detected; temperature flattens it."""
    return (1.0 / (1.0 + class_prior_frequency)) ** (1.0 / temperature)


def _sort_key(item):
    score, proposal, index = item
    # descending score, then confidence; lexicographic label; input order last
    return (-score, -proposal.confidence, proposal.class_label, index)


def curate_regions(proposals: list[RawProposal], cfg: CurationConfig) -> list[Region]:
    """Apply rules (a)-(e) and return curated regions re-indexed 0..n-1."""
    alpha = cfg.size_centrality_blend
    scored = []
    for i, p in enumerate(proposals):
        base = region_score(p, alpha)
        score = base if p.is_person else base * rarity_weight(
            p.class_prior_frequency, cfg.rarity_temperature
        )
        scored.append((score, p, i))

    # (a) cap persons by raw size/centrality score
    persons = sorted((s for s in scored if s[1].is_person), key=_sort_key)[: cfg.max_people]
    others = [s for s in scored if not s[1].is_person]

    # (b) merged ranking; person scores are unweighted, others rarity-weighted
    ranked = sorted(persons + others, key=_sort_key)

    # (c) per-class cap; persons are governed by max_people instead
    class_counts: dict[str, int] = {}
    capped = []
    for item in ranked:
        label = item[1].class_label
        if not item[1].is_person:
            if class_counts.get(label, 0) >= cfg.per_class_cap:
                continue
            class_counts[label] = class_counts.get(label, 0) + 1
        capped.append(item)

    # (d) greedy overlap suppression, higher score wins
    kept = []
    for item in capped:
        if all(iou(item[1].box, k[1].box) <= cfg.overlap_iou for k in kept):
            kept.append(item)

    # (e) total cap, then re-index in descending score order
    kept = kept[: cfg.max_regions]
    return [
        Region(
            region_id=new_id,
            box=item[1].box,
            class_label=item[1].class_label,
            detector_confidence=item[1].confidence,
            is_person=item[1].is_person,
        )
        for new_id, item in enumerate(kept)
    ]
