"""Training-data augmentation: ID remapping with a fixed color code,
drawing highlighted regions into images, and exporting training pairs.

The region-id color code is global: id 0 is always pink, and the rest of
the palette is fixed, so a remapped "[2]" is drawn in the same color in
every image it appears in. Strokes are integer-aligned pixel bands, which
keeps rendering exactly reproducible.
"""

from __future__ import annotations

import hashlib
import io
import re
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from PIL import Image

from .records import BoxGeometry, QarInstance, Region

_BRACKET_ID_RE = re.compile(r"\[(\d+)\]")


@dataclass(frozen=True)
class ColorPalette:
    """Ordered, index-addressed region colors; index 0 must stay pink."""

    entries: tuple[tuple[str, tuple[int, int, int]], ...]

    def __post_init__(self):
        if not self.entries or self.entries[0][0] != "pink":
            raise ValueError("palette index 0 must be pink")
        colors = [rgb for _, rgb in self.entries]
        if len(set(colors)) != len(colors):
            raise ValueError("palette colors must be distinct")

    def __len__(self) -> int:
        return len(self.entries)

    def color(self, index: int) -> tuple[int, int, int]:
        return self.entries[index][1]

    def name(self, index: int) -> str:
        return self.entries[index][0]


DEFAULT_PALETTE = ColorPalette(
    entries=(
        ("pink", (255, 105, 180)),
        ("cyan", (0, 255, 255)),
        ("yellow", (255, 255, 0)),
        ("green", (0, 255, 0)),
        ("orange", (255, 165, 0)),
        ("purple", (128, 0, 128)),
        ("blue", (0, 0, 255)),
        ("red", (255, 0, 0)),
    )
)


@dataclass(frozen=True)
class AugmentConfig:
    stroke_width: int = 3
    max_drawn: int = len(DEFAULT_PALETTE)
    multiplicity: int = 1
    overlay_fill: bool = False  # filled translucent highlight instead of outline only
    seed: int = 0


def remap_ids(instance: QarInstance, mapping: dict[int, int]) -> QarInstance:
    """Rewrite every bracketed id mention through an injective old->new map."""
    missing = instance.mentioned_ids - set(mapping)
    if missing:
        raise ValueError(f"mapping missing mentioned ids {sorted(missing)}")
    if len(set(mapping.values())) != len(mapping):
        raise ValueError("mapping must be injective")

    def rewrite(text: str) -> str:
        # single pass so chained rules like {0->1, 1->3} cannot cascade
        return _BRACKET_ID_RE.sub(
            lambda m: f"[{mapping[int(m.group(1))]}]" if int(m.group(1)) in mapping else m.group(0),
            text,
        )

    return replace(
        instance,
        question=rewrite(instance.question),
        answer=rewrite(instance.answer),
        rationale=rewrite(instance.rationale),
        mentioned_ids=frozenset(mapping[i] for i in instance.mentioned_ids),
    )


def _pixel_bounds(box: BoxGeometry, width: int, height: int) -> tuple[int, int, int, int]:
    x0 = round(box.x * width)
    y0 = round(box.y * height)
    x1 = round((box.x + box.w) * width) - 1
    y1 = round((box.y + box.h) * height) - 1
    return (
        max(0, min(x0, width - 1)),
        max(0, min(y0, height - 1)),
        max(0, min(x1, width - 1)),
        max(0, min(y1, height - 1)),
    )


def render_regions(
    image_bytes: bytes,
    draws: list[tuple[int, BoxGeometry]],
    palette: ColorPalette = DEFAULT_PALETTE,
    stroke_width: int = 3,
    overlay_fill: bool = False,
) -> bytes:
    """Draw one colored rectangle outline per (color_index, box) pair.

    Returns the input bytes untouched when there is nothing to draw, so a
    pass-through stays byte-identical. Output is always PNG.
    """
    if not draws:
        return image_bytes
    for index, box in draws:
        if index >= len(palette):
            raise ValueError(f"color index {index} exceeds palette size {len(palette)}")
        if box.x < 0 or box.y < 0 or box.x + box.w > 1 + 1e-12 or box.y + box.h > 1 + 1e-12:
            raise ValueError(f"region outside [0,1] bounds: {box}")

    img = Image.open(io.BytesIO(image_bytes)).convert("RGB")
    arr = np.asarray(img).copy()
    height, width = arr.shape[:2]
    s = stroke_width
    for index, box in sorted(draws, key=lambda d: d[0]):
        color = np.array(palette.color(index), dtype=np.uint8)
        x0, y0, x1, y1 = _pixel_bounds(box, width, height)
        if overlay_fill:
            patch = arr[y0 : y1 + 1, x0 : x1 + 1].astype(np.uint16)
            arr[y0 : y1 + 1, x0 : x1 + 1] = ((patch + color) // 2).astype(np.uint8)
        arr[y0 : min(y0 + s, y1 + 1), x0 : x1 + 1] = color
        arr[max(y1 - s + 1, y0) : y1 + 1, x0 : x1 + 1] = color
        arr[y0 : y1 + 1, x0 : min(x0 + s, x1 + 1)] = color
        arr[y0 : y1 + 1, max(x1 - s + 1, x0) : x1 + 1] = color

    out = io.BytesIO()
    Image.fromarray(arr).save(out, format="PNG")
    return out.getvalue()


def _instance_rng(instance: QarInstance, seed: int, salt: int = 0) -> np.random.Generator:
    key = f"{instance.instance_id}:{seed}:{salt}".encode("utf-8")
    return np.random.default_rng(int.from_bytes(hashlib.sha256(key).digest()[:8], "big"))


def vary_region_set(
    instance: QarInstance,
    image_regions: list[Region],
    cfg: AugmentConfig,
    salt: int = 0,
) -> tuple[list[tuple[int, BoxGeometry]], QarInstance]:
    """Pick which regions to draw and remap ids into the draw list's range.

    The mentioned regions are always drawn; unmentioned ones pad the draw
    list up to a random size below the cap. New ids are a random injection
    of the drawn regions into 0..len(draws)-1, so palette indexing stays
    consistent with the rewritten text.
    """
    by_id = {r.region_id: r for r in image_regions}
    unknown = instance.mentioned_ids - set(by_id)
    if unknown:
        raise ValueError(f"instance mentions unknown regions {sorted(unknown)}")
    rng = _instance_rng(instance, cfg.seed, salt)

    mentioned = sorted(instance.mentioned_ids)
    pool = sorted(set(by_id) - set(mentioned))
    cap = min(cfg.max_drawn, len(by_id))
    size = int(rng.integers(len(mentioned), cap + 1)) if cap > len(mentioned) else len(mentioned)
    extras = (
        sorted(rng.choice(pool, size=size - len(mentioned), replace=False).tolist())
        if size > len(mentioned)
        else []
    )
    drawn_old = mentioned + extras
    new_order = rng.permutation(len(drawn_old))
    mapping = {old: int(new_order[i]) for i, old in enumerate(drawn_old)}

    remapped = remap_ids(instance, mapping) if mapping else instance
    draws = sorted((mapping[old], by_id[old].box) for old in drawn_old)
    return draws, remapped


@dataclass
class ExportOutcome:
    count: int
    path: Path
    errors: list[dict]


def export_training_pairs(
    instances: list[QarInstance],
    images_by_id: dict,
    out_dir: str | Path,
    cfg: AugmentConfig = AugmentConfig(),
    palette: ColorPalette = DEFAULT_PALETTE,
    fmt: str = "jsonl",
) -> ExportOutcome:
    """Write (rendered image, input text, target text) triples for training.

    Id-based instances get their region ids varied/remapped and the drawn
    boxes rendered; description-based ones reference the original image.
    Missing/broken image files produce per-record error entries and the
    export keeps going.
    """
    from .store import json_line  # local import to avoid a cycle at module load

    out_dir = Path(out_dir)
    renders = out_dir / "renders"
    renders.mkdir(parents=True, exist_ok=True)
    if fmt not in ("jsonl", "tsv"):
        raise ValueError(f"unsupported export format: {fmt!r}")
    pairs_path = out_dir / ("training_pairs.jsonl" if fmt == "jsonl" else "training_pairs.tsv")

    errors: list[dict] = []
    count = 0
    with open(pairs_path, "w", encoding="utf-8") as fh:
        for instance in instances:
            image = images_by_id.get(instance.image_id)
            if image is None:
                errors.append({"instance_id": instance.instance_id, "error": "unknown image"})
                continue
            for copy in range(cfg.multiplicity):
                try:
                    if instance.mentioned_ids:
                        draws, out_instance = vary_region_set(
                            instance, list(image.regions), cfg, salt=copy
                        )
                        raw = Path(image.source_uri).read_bytes()
                        rendered = render_regions(
                            raw, draws, palette, cfg.stroke_width, cfg.overlay_fill
                        )
                        name = f"{instance.instance_id.replace(':', '_')}-{copy}.png"
                        image_path = renders / name
                        image_path.write_bytes(rendered)
                    else:
                        out_instance = instance
                        image_path = Path(image.source_uri)
                except OSError as exc:
                    errors.append({"instance_id": instance.instance_id, "error": str(exc)})
                    continue
                text_in = out_instance.question
                text_out = f"{out_instance.answer} {out_instance.rationale}"
                if fmt == "jsonl":
                    fh.write(json_line(
                        {"image_path": str(image_path), "text_in": text_in, "text_out": text_out}
                    ) + "\n")
                else:
                    row = [str(image_path), text_in.replace("\t", " "), text_out.replace("\t", " ")]
                    fh.write("\t".join(row) + "\n")
                count += 1
    return ExportOutcome(count=count, path=pairs_path, errors=errors)
