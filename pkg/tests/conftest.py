import io

import numpy as np
import pytest
from PIL import Image

_ACCEPTANCE_MODULE = "test_acceptance"


def pytest_runtest_logreport(report):
    """One visible pass/fail line per acceptance criterion."""
    if _ACCEPTANCE_MODULE not in report.nodeid or report.when != "call":
        return
    name = report.nodeid.rsplit("::", 1)[-1]
    verdict = "PASS" if report.passed else "FAIL"
    print(f"\n[{verdict}] {name}", flush=True)

from regionqar.records import (
    BoxGeometry,
    ImageRecord,
    QarInstance,
    ReferenceMode,
    Region,
    VerbalizationBundle,
)


def make_png(width=32, height=24, color=(90, 120, 150)) -> bytes:
    img = Image.new("RGB", (width, height), color)
    out = io.BytesIO()
    img.save(out, format="PNG")
    return out.getvalue()


def make_regions(n, *, person=False):
    regions = []
    for i in range(n):
        x = 0.05 + 0.08 * i
        regions.append(Region(
            region_id=i,
            box=BoxGeometry(x=x, y=0.1, w=0.07, h=0.2),
            class_label="person" if person else f"thing_{i}",
            detector_confidence=0.9 - 0.01 * i,
            is_person=person,
        ))
    return tuple(regions)


def make_image(image_id="img0", n_regions=4, source_uri="", **kwargs):
    return ImageRecord(
        image_id=image_id,
        width_px=kwargs.get("width_px", 320),
        height_px=kwargs.get("height_px", 240),
        source_uri=source_uri,
        regions=kwargs.get("regions", make_regions(n_regions)),
    )


def make_instance(image_id="img0", mentioned=(1, 3), mode=ReferenceMode.ID_BASED,
                  question=None, answer=None, rationale=None, instance_id="inst0",
                  generation_round=1, turn=1):
    mentioned = frozenset(mentioned)
    if question is None:
        tokens = " and ".join(f"[{i}]" for i in sorted(mentioned)) or "the scene"
        question = f"What might {tokens} be discussing?"
    return QarInstance(
        instance_id=instance_id,
        image_id=image_id,
        mode=mode,
        question=question,
        answer=answer or "They seem to be planning a trip.",
        rationale=rationale or "The map on the table suggests travel planning.",
        mentioned_ids=mentioned,
        generation_round=generation_round,
        turn=turn,
    )


def make_bundle(image: ImageRecord, probe_qas_n=15):
    return VerbalizationBundle(
        image_id=image.image_id,
        places=("street", "park"),
        objects=("bench", "lamp", "dog"),
        concepts=("outdoors", "daytime", "walking"),
        narratives=tuple(f"narrative sentence {i}" for i in range(5)),
        region_captions={r.region_id: f"caption for region {r.region_id}" for r in image.regions},
        probe_qas=tuple((f"question {i}?", f"answer {i}") for i in range(probe_qas_n)),
    )


def write_fixture_inputs(root, n_images=10, seed=0, min_regions=3, max_regions=6):
    """Write tiny PNGs plus a detector-proposals JSONL for pipeline runs."""
    import json

    images_dir = root / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    proposals_path = root / "proposals.jsonl"
    gen = np.random.default_rng(seed)
    with open(proposals_path, "w", encoding="utf-8") as fh:
        for i in range(n_images):
            image_id = f"img{i:03d}"
            color = tuple(int(c) for c in gen.integers(30, 220, size=3))
            (images_dir / f"{image_id}.png").write_bytes(make_png(48, 36, color))
            proposals = []
            n = int(gen.integers(min_regions, max_regions + 1))
            for k in range(n):
                col, row = k % 3, k // 3
                x = 0.05 + 0.32 * col
                y = 0.05 + 0.45 * row
                label = "person" if gen.uniform() < 0.4 else f"thing_{int(gen.integers(4))}"
                proposals.append({
                    "box": {"x": x, "y": y,
                            "w": float(gen.uniform(0.1, 0.28)),
                            "h": float(gen.uniform(0.1, 0.35))},
                    "class_label": label,
                    "confidence": float(gen.uniform(0.5, 1.0)),
                    "class_prior_frequency": float(gen.uniform(0, 10)),
                })
            fh.write(json.dumps({
                "image_id": image_id, "width_px": 48, "height_px": 36,
                "source_uri": str(images_dir / f"{image_id}.png"),
                "proposals": proposals,
            }) + "\n")
    return proposals_path, images_dir


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def image_file(tmp_path):
    path = tmp_path / "img0.png"
    path.write_bytes(make_png())
    return path
