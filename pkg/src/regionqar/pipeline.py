"""End-to-end pipeline orchestration over a run directory.

Stage commands run in a fixed order, each appending one stage file to the
corpus store and updating the manifest, so a run is resumable: finished
stages are no-ops unless forced. All model traffic goes through the
configured backends; with mock backends the whole run is a pure function
of the config and seed.
"""

from __future__ import annotations

import base64
import configparser
import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import augment as aug
from .annotation import AnnotationService, LABELS_STAGE
from .backends import MockBackend, hash_unit_vector, resolve_backend
from .critic import (
    CriticModelParams,
    TrainConfig,
    featurize,
    score_instance,
    train_critic,
)
from .curation import CurationConfig, RawProposal, curate_regions
from .dedup import agglomerative_cluster, embed_texts, select_representatives
from .filtering import (
    DEFAULT_CURVE_THRESHOLDS,
    DEFAULT_THRESHOLD,
    filter_by_threshold,
    precision_curve,
    random_baseline,
    write_curve_csv,
    write_curve_json,
)
from .generate import GenerationConfig, generate_for_image, prompt_digest
from .records import (
    BoxGeometry,
    BundleCardinality,
    CriticLabel,
    CriticScore,
    ImageRecord,
    QarInstance,
    Region,
    VerbalizationBundle,
)
from .stats import bbox_histograms, corpus_summary, write_histogram_csv
from .store import CorpusStore, config_digest
from .verbalize import (
    LabelVocabulary,
    assemble_bundle,
    build_global_descriptors,
    describe_regions,
    generate_probe_qas,
    sample_narratives,
)

STAGE_ORDER = (
    "curate", "verbalize", "generate", "dedup", "annotate",
    "train-critic", "score", "filter", "augment", "export", "stats",
)

# command -> (stage file it produces, prerequisite commands)
STAGE_GRAPH = {
    "curate": ("regions", ()),
    "verbalize": ("verbalizations", ("curate",)),
    "generate": ("qars", ("verbalize",)),
    "dedup": ("rep_candidates", ("generate",)),
    "annotate": (LABELS_STAGE, ("dedup",)),
    "train-critic": ("critic_meta", ("annotate",)),
    "score": ("scores", ("train-critic",)),
    "filter": ("filtered", ("score",)),
    "augment": ("augmented", ("filter",)),
    "export": ("training_pairs", ("augment",)),
    "stats": ("corpus_stats", ("generate",)),
}

MAX_PROPOSALS_PER_IMAGE = 300
COUNTERS_FILE = "counters.json"
CRITIC_CHECKPOINT = "critic.json"


class PipelineError(RuntimeError):
    pass


@dataclass
class RunConfig:
    run_dir: str = "run"
    run_id: str = ""
    seed: int = 0
    concurrency: int = 1
    proposals_path: str = ""
    images_dir: str = ""

    chat_backend: str = "mock"
    embed_backend: str = "mock"
    caption_backend: str = "mock"
    vqa_backend: str = "mock"

    curation: CurationConfig = field(default_factory=CurationConfig)
    cardinality: BundleCardinality = field(default_factory=BundleCardinality)
    narrative_temperature: float = 1.1
    vocab_paths: dict = field(default_factory=dict)  # name -> file path; empty = synthetic
    generation: GenerationConfig = field(default_factory=GenerationConfig)
    representatives_k: int = 5
    dedup_embed_unit: str = "qar"  # "qar" (full triple) or "question"
    required_annotators: int = 2
    train: TrainConfig = field(default_factory=lambda: TrainConfig(
        learning_rate=0.05, batch_size=32, max_epochs=10))
    hidden_dim: int = 16
    threshold: float = DEFAULT_THRESHOLD
    augment_cfg: aug.AugmentConfig = field(default_factory=aug.AugmentConfig)
    export_format: str = "jsonl"

    def __post_init__(self):
        if not self.run_id:
            self.run_id = f"run-{self.seed}"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["prompt_digest"] = prompt_digest()
        return d

    @classmethod
    def from_ini(cls, path: str | Path) -> "RunConfig":
        parser = configparser.ConfigParser()
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)

        def section(name: str) -> dict:
            return dict(parser[name]) if parser.has_section(name) else {}

        run = section("run")
        backends = section("backends")
        inputs = section("input")
        cur = section("curation")
        verb = section("verbalization")
        gen = section("generation")
        dedup = section("dedup")
        ann = section("annotation")
        train = section("train")
        filt = section("filter")
        augment = section("augment")

        seed = int(run.get("seed", 0))
        cfg = cls(
            run_dir=run.get("run_dir", "run"),
            run_id=run.get("run_id", ""),
            seed=seed,
            concurrency=int(run.get("concurrency", 1)),
            proposals_path=inputs.get("proposals", ""),
            images_dir=inputs.get("images_dir", ""),
            chat_backend=backends.get("chat", "mock"),
            embed_backend=backends.get("embed", "mock"),
            caption_backend=backends.get("caption", "mock"),
            vqa_backend=backends.get("vqa", "mock"),
            curation=CurationConfig(
                max_people=int(cur.get("max_people", 4)),
                per_class_cap=int(cur.get("per_class_cap", 2)),
                overlap_iou=float(cur.get("overlap_iou", 0.7)),
                max_regions=int(cur.get("max_regions", 10)),
                size_centrality_blend=float(cur.get("size_centrality_blend", 0.5)),
                rarity_temperature=float(cur.get("rarity_temperature", 1.0)),
                seed=seed,
            ),
            cardinality=BundleCardinality(
                places=int(verb.get("places", 2)),
                objects=int(verb.get("objects", 3)),
                concepts=int(verb.get("concepts", 3)),
                narratives=int(verb.get("narratives", 5)),
                probe_qas=int(verb.get("probe_qas", 15)),
            ),
            narrative_temperature=float(verb.get("narrative_temperature", 1.1)),
            vocab_paths={
                name: verb[f"vocab_{name}"]
                for name in ("places", "objects", "concepts")
                if f"vocab_{name}" in verb
            },
            generation=GenerationConfig(
                rounds_per_mode=int(gen.get("rounds_per_mode", 3)),
                qars_per_round=int(gen.get("qars_per_round", 3)),
                temperature=float(gen.get("temperature", 0.8)),
                seed=seed,
            ),
            representatives_k=int(dedup.get("representatives_k", 5)),
            dedup_embed_unit=dedup.get("embed_unit", "qar"),
            required_annotators=int(ann.get("required_annotators", 2)),
            train=TrainConfig(
                learning_rate=float(train.get("learning_rate", 0.05)),
                batch_size=int(train.get("batch_size", 32)),
                max_epochs=int(train.get("max_epochs", 10)),
                seed=seed,
                lam=float(train.get("lam", 1.0)),
            ),
            hidden_dim=int(train.get("hidden_dim", 16)),
            threshold=float(filt.get("threshold", DEFAULT_THRESHOLD)),
            augment_cfg=aug.AugmentConfig(
                stroke_width=int(augment.get("stroke_width", 3)),
                max_drawn=int(augment.get("max_drawn", len(aug.DEFAULT_PALETTE))),
                multiplicity=int(augment.get("multiplicity", 1)),
                overlay_fill=augment.get("overlay_fill", "false").lower() == "true",
                seed=seed,
            ),
            export_format=augment.get("format", "jsonl"),
        )
        return cfg

    def force_mock(self) -> None:
        self.chat_backend = self.embed_backend = "mock"
        self.caption_backend = self.vqa_backend = "mock"


def synthetic_vocabulary(name: str, size: int, dim: int, seed: int) -> LabelVocabulary:
    """Stand-in label vocabulary with hash-derived unit embeddings, used
    when no vocabulary files are configured (mock runs, tests)."""
    labels = tuple(f"{name}_{i:02d}" for i in range(size))
    emb = np.array([hash_unit_vector(f"{name}:{lbl}", dim, seed) for lbl in labels])
    return LabelVocabulary(name=name, labels=labels, embeddings=emb)


class Pipeline:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        digest = config_digest(cfg.to_dict())
        self.store = CorpusStore(
            cfg.run_dir, run_id=cfg.run_id, seed=cfg.seed, config_digest=digest
        )
        self.chat = resolve_backend(cfg.chat_backend, seed=cfg.seed)
        self.embed = resolve_backend(cfg.embed_backend, seed=cfg.seed)
        self.caption = resolve_backend(cfg.caption_backend, seed=cfg.seed)
        self.vqa = resolve_backend(cfg.vqa_backend, seed=cfg.seed)

    # -- shared helpers -------------------------------------------------------

    def _counters_path(self) -> Path:
        return self.store.run_dir / COUNTERS_FILE

    def _load_counters(self) -> dict:
        path = self._counters_path()
        if path.exists():
            return json.loads(path.read_text(encoding="utf-8"))
        return {}

    def _record_counters(self, stage: str, counts: dict) -> None:
        counters = self._load_counters()
        counters[stage] = dict(sorted(counts.items()))
        self._counters_path().write_text(
            json.dumps(counters, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

    def _images(self) -> list[ImageRecord]:
        return self.store.read_stage("regions", record_type=ImageRecord)

    def _bundles(self) -> dict[str, VerbalizationBundle]:
        bundles = self.store.read_stage("verbalizations", record_type=VerbalizationBundle)
        return {b.image_id: b for b in bundles}

    def _qars(self) -> list[QarInstance]:
        return self.store.read_stage("qars", record_type=QarInstance)

    def _map(self, fn, items):
        if self.cfg.concurrency <= 1:
            return [fn(item) for item in items]
        with ThreadPoolExecutor(max_workers=self.cfg.concurrency) as pool:
            return list(pool.map(fn, items))

    def _vocabs(self) -> dict[str, LabelVocabulary]:
        vocabs = {}
        dim = MockBackend().embed_dim if self.cfg.embed_backend == "mock" else None
        for name in ("places", "objects", "concepts"):
            if name in self.cfg.vocab_paths:
                vocabs[name] = LabelVocabulary.load(self.cfg.vocab_paths[name])
            else:
                if dim is None:
                    probe = self.embed.embed(texts=["probe"])
                    dim = len(probe[0])
                vocabs[name] = synthetic_vocabulary(name, 16, dim, self.cfg.seed)
        return vocabs

    # -- stage driver ---------------------------------------------------------

    def run_stage(self, command: str, force: bool = False) -> dict:
        if command not in STAGE_GRAPH:
            raise PipelineError(f"unknown stage: {command!r}")
        produced, prereqs = STAGE_GRAPH[command]
        for prereq in prereqs:
            prereq_stage = STAGE_GRAPH[prereq][0]
            if not self.store.has_stage(prereq_stage):
                raise PipelineError(f"requires stage: {prereq}")
        if self.store.has_stage(produced):
            if not force:
                return {"stage": command, "status": "skipped", "count": self.store.count(produced)}
            self.store.drop_stage(produced)
        runner = getattr(self, "_stage_" + command.replace("-", "_"))
        count = runner()
        return {"stage": command, "status": "done", "count": count}

    def run_all(self, force: bool = False, until: str | None = None) -> list[dict]:
        results = []
        for command in STAGE_ORDER:
            results.append(self.run_stage(command, force=force))
            if until is not None and command == until:
                break
        return results

    # -- stages ---------------------------------------------------------------

    def _stage_curate(self) -> int:
        if not self.cfg.proposals_path:
            raise PipelineError("no proposals file configured (input.proposals)")
        images = []
        seen = set()
        with open(self.cfg.proposals_path, "r", encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                record = json.loads(line)
                image_id = record["image_id"]
                if image_id in seen:
                    raise PipelineError(f"duplicate image_id in proposals: {image_id!r}")
                seen.add(image_id)
                proposals = [RawProposal.from_json_dict(p) for p in record["proposals"]]
                if len(proposals) > MAX_PROPOSALS_PER_IMAGE:
                    raise PipelineError(
                        f"image {image_id!r} has {len(proposals)} proposals "
                        f"(cap {MAX_PROPOSALS_PER_IMAGE})"
                    )
                regions = curate_regions(proposals, self.cfg.curation)
                source_uri = record.get("source_uri") or str(
                    Path(self.cfg.images_dir) / f"{image_id}.png"
                )
                images.append(ImageRecord(
                    image_id=image_id,
                    width_px=record["width_px"],
                    height_px=record["height_px"],
                    source_uri=source_uri,
                    regions=tuple(regions),
                ))
        self.store.append_records("regions", images, record_type=ImageRecord)
        return len(images)

    def _stage_verbalize(self) -> int:
        images = self._images()
        counters: dict[str, int] = {}

        def verbalize_one(image: ImageRecord):
            if not image.regions:
                return None
            raw = Path(image.source_uri).read_bytes()
            image_b64 = base64.b64encode(raw).decode("ascii")
            vec = self.embed.embed(image_b64=image_b64)[0]
            globals_ = build_global_descriptors(vec, self._vocab_cache, self.cfg.cardinality)
            narratives = sample_narratives(
                image.source_uri, self.cfg.cardinality.narratives,
                self.cfg.narrative_temperature, self.chat,
            )
            captions = describe_regions(
                image.source_uri, list(image.regions), self.caption,
                stroke_width=self.cfg.augment_cfg.stroke_width,
            )
            partial = VerbalizationBundle(
                image_id=image.image_id,
                places=globals_.places, objects=globals_.objects,
                concepts=globals_.concepts, narratives=tuple(narratives),
                region_captions=dict(captions.captions), probe_qas=(),
            )
            probe_qas = generate_probe_qas(
                partial, self.chat, self.vqa, image_b64, self.cfg.cardinality.probe_qas
            )
            return assemble_bundle(
                image, globals_, narratives, captions.captions, probe_qas,
                self.cfg.cardinality,
            ), len(captions.errors)

        self._vocab_cache = self._vocabs()
        bundles = []
        for outcome in self._map(verbalize_one, images):
            if outcome is None:
                counters["no_regions"] = counters.get("no_regions", 0) + 1
                continue
            bundle, caption_errors = outcome
            if caption_errors:
                counters["caption_error"] = counters.get("caption_error", 0) + caption_errors
            bundles.append(bundle)
        self.store.append_records("verbalizations", bundles, record_type=VerbalizationBundle)
        self._record_counters("verbalize", counters)
        return len(bundles)

    def _stage_generate(self) -> int:
        images = {i.image_id: i for i in self._images()}
        bundles = self.store.read_stage("verbalizations", record_type=VerbalizationBundle)

        def generate_one(bundle: VerbalizationBundle):
            return generate_for_image(
                bundle, images[bundle.image_id], self.cfg.generation, self.chat
            )

        instances: list[QarInstance] = []
        counters: dict[str, int] = {}
        for result in self._map(generate_one, bundles):
            instances.extend(result.instances)
            for rule, n in result.drop_counts.items():
                counters[rule] = counters.get(rule, 0) + n
        self.store.append_records("qars", instances, record_type=QarInstance)
        self._record_counters("generate", counters)
        return len(instances)

    def _stage_dedup(self) -> int:
        qars = self._qars()
        by_image: dict[str, list[QarInstance]] = {}
        for instance in qars:
            by_image.setdefault(instance.image_id, []).append(instance)
        records = []
        for image_id in sorted(by_image):
            group = by_image[image_id]
            if self.cfg.dedup_embed_unit == "question":
                texts = [q.question for q in group]
            else:
                texts = [f"{q.question}\n{q.answer}\n{q.rationale}" for q in group]
            vectors = embed_texts(texts, self.embed)
            dendrogram = agglomerative_cluster(vectors)
            reps = select_representatives(dendrogram, vectors, self.cfg.representatives_k)
            records.append({
                "image_id": image_id,
                "instance_ids": [group[i].instance_id for i in reps],
            })
        self.store.append_records("rep_candidates", records)
        return len(records)

    def _annotation_renders(self, instances: list[QarInstance],
                            images: dict[str, ImageRecord]) -> dict[str, str]:
        """Render each candidate's mentioned regions for the rating UI."""
        renders_dir = self.store.run_dir / "annotation_renders"
        renders_dir.mkdir(exist_ok=True)
        renders = {}
        for instance in instances:
            image = images[instance.image_id]
            name = instance.instance_id.replace(":", "_") + ".png"
            target = renders_dir / name
            if not target.exists():
                raw = Path(image.source_uri).read_bytes()
                draws = [
                    (rid % len(aug.DEFAULT_PALETTE), image.regions[rid].box)
                    for rid in sorted(instance.mentioned_ids)
                ]
                target.write_bytes(aug.render_regions(
                    raw, draws, stroke_width=self.cfg.augment_cfg.stroke_width
                ))
            renders[instance.instance_id] = f"annotation_renders/{name}"
        return renders

    def _stage_annotate(self) -> int:
        """Simulated two-annotator ratings for the representative candidates.

        Real annotation goes through serve-annotation; this stage exists so
        unattended runs still produce a labels stage, with ratings a
        deterministic function of (instance_id, seed).
        """
        candidates = {
            iid
            for record in self.store.iterate_stage("rep_candidates")
            for iid in record["instance_ids"]
        }
        qars = [q for q in self._qars() if q.instance_id in candidates]
        images = {i.image_id: i for i in self._images()}
        renders = self._annotation_renders(qars, images)
        service = AnnotationService(self.store)
        task_ids = service.create_rating_tasks(qars, renders, self.cfg.required_annotators)
        rating_steps = [1, 2, 2, 3, 3]  # reject 1/5, maybe 2/5, accept 2/5
        for task_id in task_ids:
            for annotator in range(self.cfg.required_annotators):
                h = int.from_bytes(hashlib.sha256(
                    f"{task_id}:{annotator}:{self.cfg.seed}".encode("utf-8")
                ).digest()[:8], "big")
                qa = rating_steps[h % 5]
                qar = None if qa == 1 else rating_steps[(h // 5) % 5]
                result = service.submit_rating(task_id, f"annotator-{annotator}", qa, qar)
                # tasks persisted by an earlier forced run may already hold ratings
                if not result.accepted and "already" not in (result.violation or ""):
                    raise PipelineError(f"mock rating rejected: {result.violation}")
        return service.export_labels()

    def _featurize_all(self, instances: list[QarInstance]) -> np.ndarray:
        bundles = self._bundles()
        feats = self._map(
            lambda q: featurize(q, bundles[q.image_id], self.embed), instances
        )
        return np.asarray(feats, dtype=np.float64)

    def _stage_train_critic(self) -> int:
        labels = self.store.read_stage(LABELS_STAGE, record_type=CriticLabel)
        qars = {q.instance_id: q for q in self._qars()}
        labeled = [qars[lab.instance_id] for lab in labels]
        features = self._featurize_all(labeled)
        params, log = train_critic(features, labels, self.cfg.train, self.cfg.hidden_dim)
        checkpoint = self.store.run_dir / CRITIC_CHECKPOINT
        params.save(checkpoint)
        self.store.append_records("critic_meta", [{
            "checkpoint": CRITIC_CHECKPOINT,
            "model_version": params.version(),
            "epochs": len(log.epoch_losses),
            "final_loss": log.epoch_losses[-1],
            "label_count": len(labels),
        }])
        return 1

    def _stage_score(self) -> int:
        params = CriticModelParams.load(self.store.run_dir / CRITIC_CHECKPOINT)
        qars = self._qars()
        features = self._featurize_all(qars)
        scores = [
            score_instance(params, features[i], instance_id=q.instance_id)
            for i, q in enumerate(qars)
        ]
        self.store.append_records("scores", scores, record_type=CriticScore)
        return len(scores)

    def _stage_filter(self) -> int:
        scores = self.store.read_stage("scores", record_type=CriticScore)
        retained_ids = set(filter_by_threshold(scores, self.cfg.threshold))
        qars = self._qars()
        retained = [q for q in qars if q.instance_id in retained_ids]
        self.store.append_records("filtered", retained, record_type=QarInstance)
        self._record_counters("filter", {"threshold_rejected": len(qars) - len(retained)})

        if self.store.has_stage(LABELS_STAGE):
            labels = self.store.read_stage(LABELS_STAGE, record_type=CriticLabel)
            accept_by_id = {lab.instance_id: lab.binary_accept for lab in labels}
            labeled_scores = [s for s in scores if s.instance_id in accept_by_id]
            if labeled_scores:
                curve = precision_curve(labeled_scores, accept_by_id, DEFAULT_CURVE_THRESHOLDS)
                write_curve_csv(curve, self.store.run_dir / "curve.csv")
                write_curve_json(curve, self.store.run_dir / "curve.json")
                baseline = random_baseline(
                    [accept_by_id[s.instance_id] for s in labeled_scores],
                    fractions=[round(0.1 * i, 1) for i in range(1, 11)],
                    seed=self.cfg.seed, repetitions=200,
                )
                write_curve_json(baseline, self.store.run_dir / "random_baseline.json")
        return len(retained)

    def _stage_augment(self) -> int:
        filtered = self.store.read_stage("filtered", record_type=QarInstance)
        images = {i.image_id: i for i in self._images()}
        records = []
        for instance in filtered:
            image = images[instance.image_id]
            for copy in range(self.cfg.augment_cfg.multiplicity):
                if instance.mentioned_ids:
                    draws, remapped = aug.vary_region_set(
                        instance, list(image.regions), self.cfg.augment_cfg, salt=copy
                    )
                else:
                    draws, remapped = [], instance
                records.append({
                    "instance": remapped.to_json_dict(),
                    "draws": [[idx, box.to_json_dict()] for idx, box in draws],
                    "copy": copy,
                })
        self.store.append_records("augmented", records)
        return len(records)

    def _stage_export(self) -> int:
        images = {i.image_id: i for i in self._images()}
        renders_dir = self.store.run_dir / "renders"
        renders_dir.mkdir(exist_ok=True)
        rows = []
        errors = []
        for record in self.store.iterate_stage("augmented"):
            instance = QarInstance.from_json_dict(record["instance"])
            image = images[instance.image_id]
            if record["draws"]:
                try:
                    raw = Path(image.source_uri).read_bytes()
                except OSError as exc:
                    errors.append({"instance_id": instance.instance_id, "error": str(exc)})
                    continue
                draws = [
                    (idx, BoxGeometry.from_json_dict(box)) for idx, box in record["draws"]
                ]
                rendered = aug.render_regions(
                    raw, draws, stroke_width=self.cfg.augment_cfg.stroke_width,
                    overlay_fill=self.cfg.augment_cfg.overlay_fill,
                )
                name = f"{instance.instance_id.replace(':', '_')}-{record['copy']}.png"
                (renders_dir / name).write_bytes(rendered)
                image_path = f"renders/{name}"
            else:
                image_path = image.source_uri
            rows.append({
                "image_path": image_path,
                "text_in": instance.question,
                "text_out": f"{instance.answer} {instance.rationale}",
            })
        self.store.append_records("training_pairs", rows)
        if errors:
            self._record_counters("export", {"missing_image": len(errors)})
        return len(rows)

    def _stage_stats(self) -> int:
        qars = self._qars()
        summary = corpus_summary(qars)
        regions: list[Region] = [r for image in self._images() for r in image.regions]
        hist = bbox_histograms(regions)
        write_histogram_csv(hist, self.store.run_dir / "histograms.csv")
        (self.store.run_dir / "stats.json").write_text(
            json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        self.store.append_records("corpus_stats", [summary])
        return 1

    # -- reporting ------------------------------------------------------------

    def report(self) -> dict:
        manifest_stages = {
            name: {"count": entry.count, "sha256": entry.sha256}
            for name, entry in self.store.stages.items()
        }
        report = {
            "run_id": self.store.run_id,
            "seed": self.store.seed,
            "stages": manifest_stages,
            "drop_counters": self._load_counters(),
        }
        curve_path = self.store.run_dir / "curve.json"
        if curve_path.exists():
            curve = json.loads(curve_path.read_text(encoding="utf-8"))
            defined = [p for p in curve if p["precision"] is not None]
            if defined:
                report["filter_curve"] = {
                    "points": len(curve),
                    "max_precision": max(p["precision"] for p in defined),
                    "base_precision": defined[0]["precision"],
                }
        stats_path = self.store.run_dir / "stats.json"
        if stats_path.exists():
            report["corpus_stats"] = json.loads(stats_path.read_text(encoding="utf-8"))["total"]
        return report


def format_report(report: dict) -> str:
    lines = [f"run {report['run_id']} (seed {report['seed']})"]
    if not report["stages"]:
        lines.append("no stages")
        return "\n".join(lines)
    lines.append(f"{'stage':<22}{'count':>8}")
    for name in sorted(report["stages"]):
        lines.append(f"{name:<22}{report['stages'][name]['count']:>8}")
    for stage, counters in sorted(report.get("drop_counters", {}).items()):
        for rule, count in sorted(counters.items()):
            lines.append(f"drop[{stage}.{rule}] = {count}")
    if "filter_curve" in report:
        fc = report["filter_curve"]
        lines.append(
            f"filter curve: base precision {fc['base_precision']:.3f}, "
            f"max {fc['max_precision']:.3f} over {fc['points']} thresholds"
        )
    if "corpus_stats" in report:
        cs = report["corpus_stats"]
        lines.append(
            f"corpus: {cs['images']} images, {cs['qars']} qars, "
            f"{cs['qars_per_image']:.2f} qars/image"
        )
    return "\n".join(lines)
