"""Annotation service: rating tasks (QA correctness, QA-to-rationale
justification) and pairwise comparison tasks served to human annotators
over a small JSON API, aggregated into critic training labels.

State is persisted through the corpus store (tasks/ratings/votes stages)
and an in-memory open-task index is rebuilt on startup. Task creation is
idempotent per (kind, instance); assignment is pull-based, least-served
first.
"""

from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from pydantic import BaseModel

from .critic import derive_labels
from .records import AnnotatorRating, CriticLabel, RATING_REJECT, VALID_RATINGS
from .store import CorpusStore

SCHEMA_VERSION = 1

TASKS_STAGE = "annotation_tasks"
RATINGS_STAGE = "annotation_ratings"
VOTES_STAGE = "annotation_votes"
LABELS_STAGE = "labels"

RATING_KIND = "rating"
PAIRWISE_KIND = "pairwise"

PAIRWISE_CRITERIA = ("correctness", "informativeness", "plausibility", "overall")
VOTE_CHOICES = ("A", "B", "Tie")
DISCARDED = "Discarded"


class AnnotationError(RuntimeError):
    pass


@dataclass
class RatingTask:
    task_id: str
    instance_id: str
    render_uri: str
    question: str
    answer: str
    rationale: str
    required_annotators: int = 2
    ratings: list[dict] = field(default_factory=list)

    @property
    def state(self) -> str:
        return "complete" if len(self.ratings) >= self.required_annotators else "open"

    def to_json_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "kind": RATING_KIND,
            "instance_id": self.instance_id,
            "render_uri": self.render_uri,
            "question": self.question,
            "answer": self.answer,
            "rationale": self.rationale,
            "required_annotators": self.required_annotators,
        }

    def view(self) -> dict:
        d = self.to_json_dict()
        d["state"] = self.state
        d["submissions"] = len(self.ratings)
        return d


@dataclass
class PairwiseTask:
    task_id: str
    image_uri: str
    question: str
    response_a: str
    response_b: str
    criterion: str
    randomized_order_seed: int
    required_votes: int = 3
    votes: list[dict] = field(default_factory=list)

    def __post_init__(self):
        if self.criterion not in PAIRWISE_CRITERIA:
            raise AnnotationError(f"criterion must be one of {PAIRWISE_CRITERIA}")

    @property
    def state(self) -> str:
        return "complete" if len(self.votes) >= self.required_votes else "open"

    def presented_order(self) -> tuple[str, str]:
        """Blinded presentation order, a pure function of the recorded seed."""
        rng = np.random.default_rng(self.randomized_order_seed)
        return ("A", "B") if rng.integers(0, 2) == 0 else ("B", "A")

    def to_json_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "kind": PAIRWISE_KIND,
            "image_uri": self.image_uri,
            "question": self.question,
            "response_a": self.response_a,
            "response_b": self.response_b,
            "criterion": self.criterion,
            "randomized_order_seed": self.randomized_order_seed,
            "required_votes": self.required_votes,
        }

    def view(self) -> dict:
        d = self.to_json_dict()
        d["state"] = self.state
        d["submissions"] = len(self.votes)
        d["presented_order"] = list(self.presented_order())
        return d


def majority_vote(choices: list[str], required_votes: int = 3) -> str:
    """Verdict with a clear majority (>= 2 of 3), otherwise Discarded."""
    if len(choices) != required_votes:
        raise AnnotationError(f"expected {required_votes} votes, got {len(choices)}")
    for choice in choices:
        if choice not in VOTE_CHOICES:
            raise AnnotationError(f"invalid choice {choice!r}")
    for choice in VOTE_CHOICES:
        if choices.count(choice) >= 2:
            return choice
    return DISCARDED


@dataclass
class SubmitResult:
    accepted: bool
    violation: str | None = None
    task_state: str = "open"


class AnnotationService:
    """Owns task state; per-task updates are serialized under one lock."""

    def __init__(self, store: CorpusStore):
        self.store = store
        self._lock = threading.Lock()
        self.rating_tasks: dict[str, RatingTask] = {}
        self.pairwise_tasks: dict[str, PairwiseTask] = {}
        self._rebuild()

    def _rebuild(self) -> None:
        if self.store.has_stage(TASKS_STAGE):
            for record in self.store.iterate_stage(TASKS_STAGE):
                if record["kind"] == RATING_KIND:
                    task = RatingTask(**{k: v for k, v in record.items() if k != "kind"})
                    self.rating_tasks[task.task_id] = task
                else:
                    task = PairwiseTask(**{k: v for k, v in record.items() if k != "kind"})
                    self.pairwise_tasks[task.task_id] = task
        if self.store.has_stage(RATINGS_STAGE):
            for record in self.store.iterate_stage(RATINGS_STAGE):
                self.rating_tasks[record["task_id"]].ratings.append(record)
        if self.store.has_stage(VOTES_STAGE):
            for record in self.store.iterate_stage(VOTES_STAGE):
                self.pairwise_tasks[record["task_id"]].votes.append(record)

    # -- task creation ------------------------------------------------------

    def create_rating_tasks(self, instances, renders: dict[str, str],
                            required_annotators: int = 2) -> list[str]:
        """One open task per instance; re-creation returns the same ids."""
        missing = [i.instance_id for i in instances if i.instance_id not in renders]
        if missing:
            raise AnnotationError(f"missing renders for instances: {missing}")
        created, task_ids = [], []
        with self._lock:
            for instance in instances:
                task_id = f"{RATING_KIND}:{instance.instance_id}"
                task_ids.append(task_id)
                if task_id in self.rating_tasks:
                    continue
                task = RatingTask(
                    task_id=task_id,
                    instance_id=instance.instance_id,
                    render_uri=renders[instance.instance_id],
                    question=instance.question,
                    answer=instance.answer,
                    rationale=instance.rationale,
                    required_annotators=required_annotators,
                )
                self.rating_tasks[task_id] = task
                created.append(task)
            if created:
                self.store.append_records(TASKS_STAGE, [t.to_json_dict() for t in created])
        return task_ids

    def create_pairwise_tasks(self, items: list[dict], criterion: str,
                              seed: int = 0, required_votes: int = 3) -> list[str]:
        """items: [{task_key, image_uri, question, response_a, response_b}]."""
        created, task_ids = [], []
        with self._lock:
            for item in items:
                task_id = f"{PAIRWISE_KIND}:{criterion}:{item['task_key']}"
                task_ids.append(task_id)
                if task_id in self.pairwise_tasks:
                    continue
                order_seed = int.from_bytes(
                    hashlib.sha256(f"{task_id}:{seed}".encode("utf-8")).digest()[:4], "big"
                )
                task = PairwiseTask(
                    task_id=task_id,
                    image_uri=item["image_uri"],
                    question=item["question"],
                    response_a=item["response_a"],
                    response_b=item["response_b"],
                    criterion=criterion,
                    randomized_order_seed=order_seed,
                    required_votes=required_votes,
                )
                self.pairwise_tasks[task_id] = task
                created.append(task)
            if created:
                self.store.append_records(TASKS_STAGE, [t.to_json_dict() for t in created])
        return task_ids

    # -- assignment ---------------------------------------------------------

    def next_task(self, kind: str, annotator_id: str) -> dict | None:
        """Least-served open task this annotator has not touched yet."""
        with self._lock:
            if kind == RATING_KIND:
                candidates = [
                    t for t in self.rating_tasks.values()
                    if t.state == "open"
                    and all(r["annotator_id"] != annotator_id for r in t.ratings)
                ]
                candidates.sort(key=lambda t: (len(t.ratings), t.task_id))
            elif kind == PAIRWISE_KIND:
                candidates = [
                    t for t in self.pairwise_tasks.values()
                    if t.state == "open"
                    and all(v["annotator_id"] != annotator_id for v in t.votes)
                ]
                candidates.sort(key=lambda t: (len(t.votes), t.task_id))
            else:
                raise AnnotationError(f"unknown task kind {kind!r}")
            return candidates[0].view() if candidates else None

    def get_task(self, task_id: str) -> dict:
        task = self.rating_tasks.get(task_id) or self.pairwise_tasks.get(task_id)
        if task is None:
            raise AnnotationError(f"unknown task {task_id!r}")
        return task.view()

    # -- submissions --------------------------------------------------------

    def submit_rating(self, task_id: str, annotator_id: str, qa_rating: int,
                      qar_rating: int | None) -> SubmitResult:
        with self._lock:
            task = self.rating_tasks.get(task_id)
            if task is None:
                return SubmitResult(False, f"unknown task {task_id!r}")
            if task.state == "complete":
                return SubmitResult(False, "task already complete", task.state)
            if any(r["annotator_id"] == annotator_id for r in task.ratings):
                return SubmitResult(False, "annotator already rated this task", task.state)
            if qa_rating not in VALID_RATINGS:
                return SubmitResult(False, f"qa_rating must be in {VALID_RATINGS}", task.state)
            if qa_rating == RATING_REJECT and qar_rating is not None:
                return SubmitResult(
                    False, "qar_rating must be absent when qa is rejected", task.state
                )
            if qa_rating != RATING_REJECT and qar_rating not in VALID_RATINGS:
                return SubmitResult(
                    False, f"qar_rating must be in {VALID_RATINGS} when qa passed", task.state
                )
            record = {
                "task_id": task_id,
                "annotator_id": annotator_id,
                "qa_rating": qa_rating,
                "qar_rating": qar_rating,
            }
            task.ratings.append(record)
            self.store.append_records(RATINGS_STAGE, [record])
            return SubmitResult(True, None, task.state)

    def submit_vote(self, task_id: str, annotator_id: str, choice: str) -> SubmitResult:
        with self._lock:
            task = self.pairwise_tasks.get(task_id)
            if task is None:
                return SubmitResult(False, f"unknown task {task_id!r}")
            if task.state == "complete":
                return SubmitResult(False, "task already complete", task.state)
            if any(v["annotator_id"] == annotator_id for v in task.votes):
                return SubmitResult(False, "annotator already voted on this task", task.state)
            if choice not in VOTE_CHOICES:
                return SubmitResult(False, f"choice must be one of {VOTE_CHOICES}", task.state)
            record = {"task_id": task_id, "annotator_id": annotator_id, "choice": choice}
            task.votes.append(record)
            self.store.append_records(VOTES_STAGE, [record])
            return SubmitResult(True, None, task.state)

    # -- aggregation --------------------------------------------------------

    def aggregate_ratings(self, task_id: str) -> CriticLabel:
        task = self.rating_tasks.get(task_id)
        if task is None:
            raise AnnotationError(f"unknown task {task_id!r}")
        if task.state != "complete":
            raise AnnotationError(f"task {task_id!r} is not complete")
        ratings = [
            AnnotatorRating(qa=r["qa_rating"], qar=r["qar_rating"]) for r in task.ratings
        ]
        return derive_labels(task.instance_id, ratings)

    def pairwise_verdict(self, task_id: str) -> str:
        task = self.pairwise_tasks.get(task_id)
        if task is None:
            raise AnnotationError(f"unknown task {task_id!r}")
        if task.state != "complete":
            raise AnnotationError(f"task {task_id!r} is not complete")
        return majority_vote([v["choice"] for v in task.votes], task.required_votes)

    def export_labels(self) -> int:
        """Write labels for every complete rating task; whole-file overwrite
        keeps repeated exports byte-identical."""
        complete = [t for t in self.rating_tasks.values() if t.state == "complete"]
        if not complete:
            raise AnnotationError("no complete rating tasks to export")
        labels = [self.aggregate_ratings(t.task_id) for t in sorted(complete, key=lambda t: t.task_id)]
        self.store.replace_stage(LABELS_STAGE, labels, record_type=CriticLabel)
        return len(labels)


# -- HTTP API ----------------------------------------------------------------


class RatingPayload(BaseModel):
    task_id: str
    annotator_id: str
    qa_rating: int
    qar_rating: int | None = None


class VotePayload(BaseModel):
    task_id: str
    annotator_id: str
    choice: str


class CreateTasksPayload(BaseModel):
    kind: str
    instances: list[dict] | None = None
    renders: dict[str, str] | None = None
    items: list[dict] | None = None
    criterion: str = "overall"
    required_annotators: int = 2
    required_votes: int = 3
    seed: int = 0


def create_app(service: AnnotationService, renders_dir: str | Path | None = None):
    """FastAPI wrapper over the service; every response carries schema_version."""
    from fastapi import FastAPI, HTTPException
    from fastapi.responses import FileResponse

    app = FastAPI(title="annotation-service")

    def versioned(payload: dict) -> dict:
        payload["schema_version"] = SCHEMA_VERSION
        return payload

    @app.get("/tasks/next")
    def tasks_next(kind: str, annotator: str):
        task = service.next_task(kind, annotator)
        return versioned({"task": task})

    @app.get("/tasks/{task_id}")
    def get_task(task_id: str):
        try:
            return versioned({"task": service.get_task(task_id)})
        except AnnotationError as exc:
            raise HTTPException(status_code=404, detail=str(exc))

    @app.post("/ratings")
    def post_rating(payload: RatingPayload):
        result = service.submit_rating(
            payload.task_id, payload.annotator_id, payload.qa_rating, payload.qar_rating
        )
        if not result.accepted:
            raise HTTPException(status_code=422, detail=result.violation)
        return versioned({"accepted": True, "task_state": result.task_state})

    @app.post("/votes")
    def post_vote(payload: VotePayload):
        result = service.submit_vote(payload.task_id, payload.annotator_id, payload.choice)
        if not result.accepted:
            raise HTTPException(status_code=422, detail=result.violation)
        return versioned({"accepted": True, "task_state": result.task_state})

    @app.post("/admin/create_tasks")
    def admin_create_tasks(payload: CreateTasksPayload):
        from .records import QarInstance

        if payload.kind == RATING_KIND:
            instances = [QarInstance.from_json_dict(d) for d in payload.instances or []]
            ids = service.create_rating_tasks(
                instances, payload.renders or {}, payload.required_annotators
            )
        elif payload.kind == PAIRWISE_KIND:
            ids = service.create_pairwise_tasks(
                payload.items or [], payload.criterion, payload.seed, payload.required_votes
            )
        else:
            raise HTTPException(status_code=422, detail=f"unknown kind {payload.kind!r}")
        return versioned({"task_ids": ids})

    @app.get("/admin/export")
    def admin_export():
        try:
            count = service.export_labels()
        except AnnotationError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return versioned({"exported": count, "stage": LABELS_STAGE})

    if renders_dir is not None:
        renders_path = Path(renders_dir)

        @app.get("/renders/{name:path}")
        def get_render(name: str):
            target = (renders_path / name).resolve()
            if renders_path.resolve() not in target.parents or not target.is_file():
                raise HTTPException(status_code=404, detail="no such render")
            return FileResponse(target)

    return app
