"""Mine localized question/answer/rationale triples from a chat LLM.

Two prompt styles per image: one listing regions by bracketed numerical
id with box coordinates, one listing plain captions and asking for
descriptive-phrase references. Each style runs several independent
conversations, and each conversation asks for several sequential triples
with the previous ones kept in context so the model avoids repeats.

Instances that fail parsing or the reference-mode rules are dropped, not
repaired, and every drop is counted under a rule name.
"""

from __future__ import annotations

import hashlib
import re
from collections import Counter
from dataclasses import dataclass, field

from .records import (
    MAX_MENTIONED_IDS,
    ImageRecord,
    QarInstance,
    RecordMismatchError,
    ReferenceMode,
    VerbalizationBundle,
    validate_qar,
)
from .verbalize import DESCRIPTOR_SECTIONS, load_prompt, render_context

_BRACKET_ID_RE = re.compile(r"\[(\d+)\]")
_FIELD_RE = re.compile(
    r"^\s*(question|answer|rationale)\s*:\s*(.*)$", re.IGNORECASE
)


class QarParseError(ValueError):
    def __init__(self, missing: list[str]):
        super().__init__(f"missing fields: {', '.join(missing)}")
        self.missing = missing


@dataclass(frozen=True)
class GenerationConfig:
    rounds_per_mode: int = 3
    qars_per_round: int = 3
    temperature: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if self.rounds_per_mode < 1 or self.qars_per_round < 1:
            raise ValueError("rounds_per_mode and qars_per_round must be >= 1")


def extract_id_mentions(text: str) -> set[int]:
    """All distinct integers appearing as bracketed tokens like ``[3]``."""
    return {int(m) for m in _BRACKET_ID_RE.findall(text)}


def parse_qar_block(text: str) -> tuple[str, str, str]:
    """Pull the three labeled fields out of an LLM reply.

    Labels are case-insensitive and may appear in any order; a field's
    value continues across lines until the next label. All three must be
    present and non-empty.
    """
    values: dict[str, list[str]] = {}
    current: str | None = None
    for line in text.splitlines():
        m = _FIELD_RE.match(line)
        if m:
            current = m.group(1).lower()
            values.setdefault(current, [])
            if m.group(2).strip():
                values[current].append(m.group(2).strip())
        elif current is not None and line.strip():
            values[current].append(line.strip())
    fields = {}
    missing = []
    for name in ("question", "answer", "rationale"):
        joined = " ".join(values.get(name, [])).strip()
        if joined:
            fields[name] = joined
        else:
            missing.append(name)
    if missing:
        raise QarParseError(missing)
    return fields["question"], fields["answer"], fields["rationale"]


def _region_list(image: ImageRecord, bundle: VerbalizationBundle, mode: ReferenceMode,
                 include_captions: bool) -> str:
    lines = []
    for region in image.regions:
        caption = bundle.region_captions.get(region.region_id, "")
        b = region.box
        if mode is ReferenceMode.ID_BASED:
            coords = f"({b.x:.3f}, {b.y:.3f}, {b.w:.3f}, {b.h:.3f})"
            suffix = f": {caption}" if include_captions and caption else ""
            lines.append(f"[{region.region_id}] {coords}{suffix}")
        else:
            if include_captions and caption:
                lines.append(f"- {caption}")
    return "\n".join(lines)


def build_prompt(
    bundle: VerbalizationBundle,
    mode: ReferenceMode,
    image: ImageRecord,
    descriptors: tuple[str, ...] = DESCRIPTOR_SECTIONS,
) -> str:
    """Render the first-turn generation prompt for one reference mode.

    The image record supplies box coordinates for the id-based region
    list; the bundle supplies every text descriptor. ``descriptors``
    selects which sections appear (the ablation harness passes subsets).
    """
    if bundle.image_id != image.image_id:
        raise RecordMismatchError(
            f"bundle {bundle.image_id!r} does not match image {image.image_id!r}"
        )
    if not descriptors:
        raise ValueError("at least one descriptor section is required")
    mode = ReferenceMode(mode)
    if mode is ReferenceMode.ID_BASED and not image.regions:
        raise ValueError("id-based prompts need at least one region")

    context_sections = tuple(s for s in descriptors if s in ("concepts", "narratives", "qas"))
    context = render_context(bundle, sections=context_sections)
    if mode is ReferenceMode.ID_BASED:
        template = load_prompt("qar_id.txt")
        region_list = _region_list(image, bundle, mode, include_captions="local" in descriptors)
        return template.format(context=context, region_list=region_list).strip()
    template = load_prompt("qar_description.txt")
    if "local" in descriptors:
        captions = render_context(bundle, sections=("local",))
        context = f"{context}\n\n{captions}" if context else captions
    return template.format(context=context).strip()


@dataclass
class GenerationResult:
    instances: list[QarInstance]
    drop_counts: Counter = field(default_factory=Counter)


def _mode_violations(mode: ReferenceMode, mentioned: set[int], image: ImageRecord) -> str | None:
    """Return the drop-rule name this candidate violates, or None."""
    if mode is ReferenceMode.ID_BASED:
        if not mentioned:
            return "no_id_mention"
        if len(mentioned) > MAX_MENTIONED_IDS:
            return "too_many_ids"
        if not mentioned <= image.region_ids:
            return "unknown_id"
    else:
        if mentioned:
            return "id_in_description_mode"
    return None


def run_generation(
    bundle: VerbalizationBundle,
    mode: ReferenceMode,
    cfg: GenerationConfig,
    llm_backend,
    image: ImageRecord,
    descriptors: tuple[str, ...] = DESCRIPTOR_SECTIONS,
) -> GenerationResult:
    """Drive rounds x turns conversations and parse replies into instances."""
    mode = ReferenceMode(mode)
    first_prompt = build_prompt(bundle, mode, image, descriptors)
    followup = load_prompt("qar_followup.txt").strip()
    result = GenerationResult(instances=[])

    for round_no in range(1, cfg.rounds_per_mode + 1):
        messages = [{"role": "user", "content": f"{first_prompt}\n\n(round {round_no})"}]
        for turn_no in range(1, cfg.qars_per_round + 1):
            reply = llm_backend.chat(
                messages=messages, temperature=cfg.temperature, seed=cfg.seed + round_no
            )
            messages = messages + [
                {"role": "assistant", "content": reply},
                {"role": "user", "content": followup},
            ]
            try:
                question, answer, rationale = parse_qar_block(reply)
            except QarParseError:
                result.drop_counts["parse_error"] += 1
                continue
            mentioned = (
                extract_id_mentions(question)
                | extract_id_mentions(answer)
                | extract_id_mentions(rationale)
            )
            rule = _mode_violations(mode, mentioned, image)
            if rule is not None:
                result.drop_counts[rule] += 1
                continue
            instance = QarInstance(
                instance_id=f"{image.image_id}:{mode.value}:{round_no}:{turn_no}",
                image_id=image.image_id,
                mode=mode,
                question=question,
                answer=answer,
                rationale=rationale,
                mentioned_ids=frozenset(mentioned),
                generation_round=round_no,
                turn=turn_no,
                raw_llm_text=reply,
            )
            if validate_qar(instance, image):
                result.drop_counts["invariant_violation"] += 1
                continue
            result.instances.append(instance)
    return result


def generate_for_image(
    bundle: VerbalizationBundle,
    image: ImageRecord,
    cfg: GenerationConfig,
    llm_backend,
    descriptors: tuple[str, ...] = DESCRIPTOR_SECTIONS,
) -> GenerationResult:
    """Both reference modes for one image; up to 2 x rounds x turns instances."""
    combined = GenerationResult(instances=[])
    for mode in (ReferenceMode.ID_BASED, ReferenceMode.DESCRIPTION_BASED):
        if mode is ReferenceMode.ID_BASED and not image.regions:
            combined.drop_counts["no_regions"] += cfg.rounds_per_mode * cfg.qars_per_round
            continue
        part = run_generation(bundle, mode, cfg, llm_backend, image, descriptors)
        combined.instances.extend(part.instances)
        combined.drop_counts.update(part.drop_counts)
    return combined


def prompt_digest() -> str:
    """Digest over the versioned prompt templates, recorded with run configs."""
    h = hashlib.sha256()
    for name in ("probe_questions.txt", "qar_id.txt", "qar_description.txt", "qar_followup.txt"):
        h.update(load_prompt(name).encode("utf-8"))
    return h.hexdigest()
