"""Image-to-text verbalization: global concept labels by embedding
retrieval, sampled narratives, per-region captions, and a probe
question/answer loop. Output is one VerbalizationBundle per image.
"""

from __future__ import annotations

import base64
import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .augment import DEFAULT_PALETTE, render_regions
from .records import (
    DEFAULT_CARDINALITY,
    BundleCardinality,
    ImageRecord,
    Region,
    ValidationError,
    VerbalizationBundle,
    validate_bundle,
)

_NUMBER_WORDS = {
    1: "one", 2: "two", 3: "three", 4: "four", 5: "five", 6: "six",
    7: "seven", 8: "eight", 9: "nine", 10: "ten", 11: "eleven",
    12: "twelve", 13: "thirteen", 14: "fourteen", 15: "fifteen",
    16: "sixteen", 17: "seventeen", 18: "eighteen", 19: "nineteen",
    20: "twenty",
}

DESCRIPTOR_SECTIONS = ("concepts", "narratives", "local", "qas")
DEFAULT_NARRATIVE_TEMPERATURE = 1.1
DEFAULT_LABEL_TEMPLATE = "a photo of {label}"


class VerbalizationError(RuntimeError):
    def __init__(self, message: str, parsed: int | None = None):
        super().__init__(message)
        self.parsed = parsed


def load_prompt(name: str) -> str:
    return resources.files("regionqar.prompts").joinpath(name).read_text(encoding="utf-8")


@dataclass(frozen=True)
class LabelVocabulary:
    """A named label list with one unit-norm embedding row per label."""

    name: str
    labels: tuple[str, ...]
    embeddings: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        emb = np.asarray(self.embeddings, dtype=np.float64)
        object.__setattr__(self, "embeddings", emb)
        if emb.ndim != 2 or emb.shape[0] != len(self.labels):
            raise ValidationError(
                f"vocabulary {self.name!r}: need one embedding row per label, "
                f"got {emb.shape} for {len(self.labels)} labels"
            )
        norms = np.linalg.norm(emb, axis=1)
        if not np.all(np.abs(norms - 1.0) <= 1e-6):
            raise ValidationError(f"vocabulary {self.name!r}: embedding rows must be unit-norm")

    def __len__(self) -> int:
        return len(self.labels)

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "labels": list(self.labels),
            "embeddings": self.embeddings.tolist(),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "LabelVocabulary":
        return cls(name=d["name"], labels=tuple(d["labels"]), embeddings=np.array(d["embeddings"]))

    @classmethod
    def load(cls, path: str | Path) -> "LabelVocabulary":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh)


def build_vocabulary(
    name: str,
    labels: list[str],
    backend,
    template: str = DEFAULT_LABEL_TEMPLATE,
) -> LabelVocabulary:
    """Embed each label through the prompt template and unit-normalize."""
    texts = [template.format(label=label) for label in labels]
    emb = np.asarray(backend.embed(texts=texts), dtype=np.float64)
    emb = emb / np.linalg.norm(emb, axis=1, keepdims=True)
    return LabelVocabulary(name=name, labels=tuple(labels), embeddings=emb)


def retrieve_concepts(
    image_embedding, vocab: LabelVocabulary, k: int
) -> list[tuple[str, float]]:
    """Top-k labels by cosine similarity, descending; ties keep label order."""
    e = np.asarray(image_embedding, dtype=np.float64)
    if e.ndim != 1 or e.shape[0] != vocab.embeddings.shape[1]:
        raise ValidationError(
            f"embedding dimension {e.shape} does not match vocabulary "
            f"{vocab.name!r} dimension {vocab.embeddings.shape[1]}"
        )
    if k > len(vocab):
        raise ValidationError(f"k={k} exceeds vocabulary {vocab.name!r} size {len(vocab)}")
    norm = np.linalg.norm(e)
    if norm == 0:
        raise ValidationError("image embedding must be non-zero")
    sims = vocab.embeddings @ (e / norm)
    # stable sort on -sim keeps label order among exact ties
    order = np.argsort(-sims, kind="stable")[:k]
    return [(vocab.labels[i], float(sims[i])) for i in order]


@dataclass(frozen=True)
class GlobalDescriptors:
    places: tuple[str, ...]
    objects: tuple[str, ...]
    concepts: tuple[str, ...]


def build_global_descriptors(
    image_embedding,
    vocabs: dict[str, LabelVocabulary],
    cardinality: BundleCardinality = DEFAULT_CARDINALITY,
) -> GlobalDescriptors:
    """Retrieve the top place/object/concept labels from their vocabularies."""
    picks = {}
    for name, k in (("places", cardinality.places), ("objects", cardinality.objects),
                    ("concepts", cardinality.concepts)):
        if name not in vocabs:
            raise ValidationError(f"missing vocabulary: {name!r}")
        picks[name] = tuple(lbl for lbl, _ in retrieve_concepts(image_embedding, vocabs[name], k))
    return GlobalDescriptors(**picks)


def sample_narratives(image_ref: str, n: int = 5, temperature: float = DEFAULT_NARRATIVE_TEMPERATURE,
                      backend=None) -> list[str]:
    """Sample n narrative descriptions of the whole image."""
    if n <= 0:
        return []
    out = []
    for i in range(n):
        text = backend.chat(
            messages=[{
                "role": "user",
                "content": (
                    f"IMAGE: {image_ref}\n"
                    f"Write one short narrative description of the whole image (sample {i + 1})."
                ),
            }],
            temperature=temperature,
            seed=i,
        )
        if not text.strip():
            raise VerbalizationError(f"backend returned empty narrative for sample {i + 1}")
        out.append(text.strip())
    return out


def _load_image_b64(image_ref: str) -> str:
    return base64.b64encode(Path(image_ref).read_bytes()).decode("ascii")


@dataclass
class RegionCaptionResult:
    captions: dict[int, str]
    errors: dict[int, str]


def describe_regions(image_ref: str, regions: list[Region], backend,
                     stroke_width: int = 3) -> RegionCaptionResult:
    """Caption each region from an image variant with that region's box drawn.

    Failures are per-region: the result carries captions for the regions
    that succeeded and error text for the ones that did not.
    """
    result = RegionCaptionResult(captions={}, errors={})
    if not regions:
        return result
    raw = Path(image_ref).read_bytes()
    for region in regions:
        try:
            rendered = render_regions(
                raw,
                [(region.region_id % len(DEFAULT_PALETTE), region.box)],
                stroke_width=stroke_width,
            )
            image_b64 = base64.b64encode(rendered).decode("ascii")
            caption = backend.caption(image_b64, box=region.box.to_json_dict())
            result.captions[region.region_id] = caption
        except Exception as exc:
            result.errors[region.region_id] = str(exc)
    return result


_NUMBERED_LINE_RE = re.compile(r"^\s*\d+[.)]\s*(.+?)\s*$")


def parse_question_list(text: str) -> list[str]:
    """Accept a numbered list or one question per line; other lines don't count."""
    questions = []
    for line in text.splitlines():
        m = _NUMBERED_LINE_RE.match(line)
        if m:
            questions.append(m.group(1))
        elif line.strip().endswith("?"):
            questions.append(line.strip())
    return questions


def _number_word(n: int) -> str:
    return _NUMBER_WORDS.get(n, str(n))


def probe_question_prompt(partial_bundle: VerbalizationBundle, n: int) -> str:
    template = load_prompt("probe_questions.txt")
    global_text = render_context(partial_bundle, sections=("concepts", "narratives"))
    local_text = render_context(partial_bundle, sections=("local",))
    return template.format(
        global_descriptors=global_text,
        local_descriptors=local_text,
        n_questions=_number_word(n),
    ).strip()


def generate_probe_qas(
    partial_bundle: VerbalizationBundle,
    llm_backend,
    vqa_backend,
    image_b64: str,
    n: int = 15,
    temperature: float = 1.0,
) -> list[tuple[str, str]]:
    """One LLM call for n probe questions, then one VQA call per question."""
    if not partial_bundle.concepts or not partial_bundle.region_captions:
        raise VerbalizationError("partial bundle must carry global and local descriptors")
    prompt = probe_question_prompt(partial_bundle, n)
    reply = llm_backend.chat(
        messages=[{"role": "user", "content": prompt}], temperature=temperature, seed=0
    )
    questions = parse_question_list(reply)
    if len(questions) < n:
        raise VerbalizationError(
            f"expected {n} probe questions, parsed {len(questions)}", parsed=len(questions)
        )
    return [(q, vqa_backend.vqa(image_b64, q)) for q in questions[:n]]


def render_context(
    bundle: VerbalizationBundle,
    sections: tuple[str, ...] = DESCRIPTOR_SECTIONS,
) -> str:
    """Render the prompt-context text block in fixed section order:
    concept labels, narratives, region captions, probe QAs."""
    parts = []
    if "concepts" in sections:
        parts.append(
            "Places: " + ", ".join(bundle.places) + "\n"
            "Objects: " + ", ".join(bundle.objects) + "\n"
            "Concepts: " + ", ".join(bundle.concepts)
        )
    if "narratives" in sections and bundle.narratives:
        parts.append("Narratives:\n" + "\n".join(f"- {t}" for t in bundle.narratives))
    if "local" in sections and bundle.region_captions:
        parts.append(
            "Region captions:\n"
            + "\n".join(f"- {bundle.region_captions[i]}" for i in sorted(bundle.region_captions))
        )
    if "qas" in sections and bundle.probe_qas:
        parts.append(
            "Question-answer pairs:\n"
            + "\n".join(f"Q: {q} A: {a}" for q, a in bundle.probe_qas)
        )
    return "\n\n".join(parts)


def assemble_bundle(
    image: ImageRecord,
    globals_: GlobalDescriptors,
    narratives: list[str],
    region_captions: dict[int, str],
    probe_qas: list[tuple[str, str]],
    cardinality: BundleCardinality = DEFAULT_CARDINALITY,
) -> VerbalizationBundle:
    """Combine all descriptor parts and enforce the bundle invariants."""
    bundle = VerbalizationBundle(
        image_id=image.image_id,
        places=globals_.places,
        objects=globals_.objects,
        concepts=globals_.concepts,
        narratives=tuple(narratives),
        region_captions=dict(region_captions),
        probe_qas=tuple(probe_qas),
    )
    violations = validate_bundle(bundle, image, cardinality)
    if violations:
        raise ValidationError("; ".join(violations))
    return bundle
