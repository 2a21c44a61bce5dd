"""Canonical record types shared by every pipeline stage.

All types are immutable values. Construction performs basic field sanity
checks; cross-record rules (id membership, cardinalities) live in the
validate_* helpers so callers can collect violations instead of catching
exceptions mid-batch.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, fields

MAX_MENTIONED_IDS = 5


class ValidationError(ValueError):
    """A record violates its schema or an invariant."""


class RecordMismatchError(ValueError):
    """Two records that must refer to the same image/instance do not."""


class ReferenceMode(str, enum.Enum):
    ID_BASED = "id"
    DESCRIPTION_BASED = "description"


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ValidationError(msg)


@dataclass(frozen=True)
class BoxGeometry:
    """Axis-aligned box in normalized image coordinates (fractions of W/H)."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        _require(self.x >= 0 and self.y >= 0, f"box origin must be >= 0, got ({self.x}, {self.y})")
        _require(self.w > 0 and self.h > 0, f"box must have positive extent, got ({self.w}, {self.h})")
        _require(self.x + self.w <= 1 + 1e-12, f"box exceeds right edge: x+w = {self.x + self.w}")
        _require(self.y + self.h <= 1 + 1e-12, f"box exceeds bottom edge: y+h = {self.y + self.h}")

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2, self.y + self.h / 2)

    def to_json_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "w": self.w, "h": self.h}

    @classmethod
    def from_json_dict(cls, d: dict) -> "BoxGeometry":
        return cls(x=d["x"], y=d["y"], w=d["w"], h=d["h"])


@dataclass(frozen=True)
class Region:
    region_id: int
    box: BoxGeometry
    class_label: str
    detector_confidence: float
    is_person: bool = False

    def __post_init__(self):
        _require(self.region_id >= 0, f"region_id must be non-negative, got {self.region_id}")
        _require(
            0.0 <= self.detector_confidence <= 1.0,
            f"detector_confidence out of [0,1]: {self.detector_confidence}",
        )

    def to_json_dict(self) -> dict:
        return {
            "region_id": self.region_id,
            "box": self.box.to_json_dict(),
            "class_label": self.class_label,
            "detector_confidence": self.detector_confidence,
            "is_person": self.is_person,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "Region":
        return cls(
            region_id=d["region_id"],
            box=BoxGeometry.from_json_dict(d["box"]),
            class_label=d["class_label"],
            detector_confidence=d["detector_confidence"],
            is_person=d["is_person"],
        )


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    width_px: int
    height_px: int
    source_uri: str
    regions: tuple[Region, ...] = ()

    def __post_init__(self):
        _require(bool(self.image_id), "image_id must be non-empty")
        _require(self.width_px > 0 and self.height_px > 0, "image dimensions must be positive")
        object.__setattr__(self, "regions", tuple(self.regions))
        ids = [r.region_id for r in self.regions]
        _require(
            ids == list(range(len(ids))),
            f"region ids must be contiguous 0..n-1 in order, got {ids}",
        )

    @property
    def region_ids(self) -> frozenset[int]:
        return frozenset(r.region_id for r in self.regions)

    def to_json_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "width_px": self.width_px,
            "height_px": self.height_px,
            "source_uri": self.source_uri,
            "regions": [r.to_json_dict() for r in self.regions],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "ImageRecord":
        return cls(
            image_id=d["image_id"],
            width_px=d["width_px"],
            height_px=d["height_px"],
            source_uri=d["source_uri"],
            regions=tuple(Region.from_json_dict(r) for r in d["regions"]),
        )


@dataclass(frozen=True)
class BundleCardinality:
    """How many items each descriptor section of a bundle must carry."""

    places: int = 2
    objects: int = 3
    concepts: int = 3
    narratives: int = 5
    probe_qas: int = 15


DEFAULT_CARDINALITY = BundleCardinality()


@dataclass(frozen=True)
class VerbalizationBundle:
    """Full text rendering of one image: labels, narratives, region captions, probe QAs."""

    image_id: str
    places: tuple[str, ...]
    objects: tuple[str, ...]
    concepts: tuple[str, ...]
    narratives: tuple[str, ...]
    region_captions: dict[int, str]
    probe_qas: tuple[tuple[str, str], ...]

    def __post_init__(self):
        object.__setattr__(self, "places", tuple(self.places))
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "concepts", tuple(self.concepts))
        object.__setattr__(self, "narratives", tuple(self.narratives))
        object.__setattr__(self, "probe_qas", tuple((q, a) for q, a in self.probe_qas))
        object.__setattr__(
            self, "region_captions", dict(sorted(self.region_captions.items()))
        )

    def to_json_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "places": list(self.places),
            "objects": list(self.objects),
            "concepts": list(self.concepts),
            "narratives": list(self.narratives),
            "region_captions": {str(k): v for k, v in self.region_captions.items()},
            "probe_qas": [[q, a] for q, a in self.probe_qas],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "VerbalizationBundle":
        return cls(
            image_id=d["image_id"],
            places=tuple(d["places"]),
            objects=tuple(d["objects"]),
            concepts=tuple(d["concepts"]),
            narratives=tuple(d["narratives"]),
            region_captions={int(k): v for k, v in d["region_captions"].items()},
            probe_qas=tuple((q, a) for q, a in d["probe_qas"]),
        )


def validate_bundle(
    bundle: VerbalizationBundle,
    image: ImageRecord,
    cardinality: BundleCardinality = DEFAULT_CARDINALITY,
) -> list[str]:
    """Return invariant violations for a bundle against its image (empty = ok)."""
    if bundle.image_id != image.image_id:
        raise RecordMismatchError(
            f"bundle is for image {bundle.image_id!r}, got image {image.image_id!r}"
        )
    violations = []
    for name in ("places", "objects", "concepts", "narratives", "probe_qas"):
        want = getattr(cardinality, name)
        got = len(getattr(bundle, name))
        if got != want:
            violations.append(f"{name}: expected {want} entries, got {got}")
    unknown = set(bundle.region_captions) - image.region_ids
    if unknown:
        violations.append(f"region_captions reference unknown region ids {sorted(unknown)}")
    return violations


@dataclass(frozen=True)
class QarInstance:
    """One localized question/answer/rationale with reference mode and provenance."""

    instance_id: str
    image_id: str
    mode: ReferenceMode
    question: str
    answer: str
    rationale: str
    mentioned_ids: frozenset[int]
    generation_round: int
    turn: int
    raw_llm_text: str = ""

    def __post_init__(self):
        object.__setattr__(self, "mode", ReferenceMode(self.mode))
        object.__setattr__(self, "mentioned_ids", frozenset(self.mentioned_ids))
        _require(self.generation_round >= 1, "generation_round must be >= 1")
        _require(self.turn >= 1, "turn must be >= 1")

    def invariant_violations(self) -> list[str]:
        violations = []
        if len(self.mentioned_ids) > MAX_MENTIONED_IDS:
            violations.append(
                f"exceeds {MAX_MENTIONED_IDS} mentions: {len(self.mentioned_ids)}"
            )
        if self.mode is ReferenceMode.ID_BASED and not self.mentioned_ids:
            violations.append("id-mode requires >=1 mention")
        if self.mode is ReferenceMode.DESCRIPTION_BASED and self.mentioned_ids:
            violations.append("description-mode must not mention ids")
        for name in ("question", "answer", "rationale"):
            if not getattr(self, name).strip():
                violations.append(f"{name} is empty")
        return violations

    def to_json_dict(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "image_id": self.image_id,
            "mode": self.mode.value,
            "question": self.question,
            "answer": self.answer,
            "rationale": self.rationale,
            "mentioned_ids": sorted(self.mentioned_ids),
            "generation_round": self.generation_round,
            "turn": self.turn,
            "raw_llm_text": self.raw_llm_text,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "QarInstance":
        return cls(
            instance_id=d["instance_id"],
            image_id=d["image_id"],
            mode=ReferenceMode(d["mode"]),
            question=d["question"],
            answer=d["answer"],
            rationale=d["rationale"],
            mentioned_ids=frozenset(d["mentioned_ids"]),
            generation_round=d["generation_round"],
            turn=d["turn"],
            raw_llm_text=d.get("raw_llm_text", ""),
        )


def validate_qar(instance: QarInstance, image: ImageRecord) -> list[str]:
    """Check a QAR against its image; returns violations (empty list = ok).

    Raises RecordMismatchError when the instance belongs to a different
    image, since that is a caller bug rather than a data-quality failure.
    """
    if instance.image_id != image.image_id:
        raise RecordMismatchError(
            f"instance {instance.instance_id!r} is for image {instance.image_id!r}, "
            f"got image {image.image_id!r}"
        )
    violations = instance.invariant_violations()
    unknown = instance.mentioned_ids - image.region_ids
    if unknown:
        violations.append(f"mentions unknown region ids {sorted(unknown)}")
    return violations


RATING_REJECT, RATING_MAYBE, RATING_ACCEPT = 1, 2, 3
VALID_RATINGS = (RATING_REJECT, RATING_MAYBE, RATING_ACCEPT)


@dataclass(frozen=True)
class AnnotatorRating:
    """One annotator's (qa, qa->rationale) ratings; qar is absent when qa was rejected."""

    qa: int
    qar: int | None

    def __post_init__(self):
        _require(self.qa in VALID_RATINGS, f"qa rating must be in {VALID_RATINGS}, got {self.qa}")
        if self.qa == RATING_REJECT:
            _require(self.qar is None, "qar rating must be absent when qa is rejected")
        else:
            _require(
                self.qar in VALID_RATINGS,
                f"qar rating must be in {VALID_RATINGS} when qa passed, got {self.qar}",
            )

    def to_json(self) -> list:
        return [self.qa, self.qar]

    @classmethod
    def from_json(cls, pair: list) -> "AnnotatorRating":
        return cls(qa=pair[0], qar=pair[1])


@dataclass(frozen=True)
class CriticLabel:
    instance_id: str
    annotator_ratings: tuple[AnnotatorRating, AnnotatorRating]
    binary_accept: int
    y_qa: float
    y_qar: float

    def __post_init__(self):
        object.__setattr__(self, "annotator_ratings", tuple(self.annotator_ratings))
        _require(len(self.annotator_ratings) == 2, "exactly two annotator ratings required")
        _require(self.binary_accept in (0, 1), "binary_accept must be 0 or 1")
        _require(0.0 <= self.y_qa <= 1.0, f"y_qa out of [0,1]: {self.y_qa}")
        _require(0.0 <= self.y_qar <= 1.0, f"y_qar out of [0,1]: {self.y_qar}")

    def to_json_dict(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "annotator_ratings": [r.to_json() for r in self.annotator_ratings],
            "binary_accept": self.binary_accept,
            "y_qa": self.y_qa,
            "y_qar": self.y_qar,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "CriticLabel":
        return cls(
            instance_id=d["instance_id"],
            annotator_ratings=tuple(AnnotatorRating.from_json(p) for p in d["annotator_ratings"]),
            binary_accept=d["binary_accept"],
            y_qa=d["y_qa"],
            y_qar=d["y_qar"],
        )


@dataclass(frozen=True)
class CriticScore:
    instance_id: str
    score: float
    model_version: str

    def __post_init__(self):
        _require(0.0 <= self.score <= 1.0, f"score out of [0,1]: {self.score}")

    def to_json_dict(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "score": self.score,
            "model_version": self.model_version,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "CriticScore":
        return cls(
            instance_id=d["instance_id"],
            score=d["score"],
            model_version=d["model_version"],
        )


def record_fields(record) -> dict:
    """Field-by-field dict view used by round-trip comparisons in tests."""
    return {f.name: getattr(record, f.name) for f in fields(record)}
