"""Acceptability critic: label derivation from annotator ratings, a small
multi-task network over text embeddings, and its training/evaluation.

The model is one shared tanh hidden layer with three linear heads:
a binary accept/reject classifier plus two regression heads predicting
the (rescaled) QA and QA-to-rationale ratings. The training objective is

    L = BCE(sigmoid(cls), accept) + lambda * (MSE(qa) + MSE(qar))

so the rating heads shape the shared representation, which is the whole
point of keeping them. Everything runs in float64 and is exactly
reproducible given a seed; gradient_check validates the analytic
gradients against central finite differences.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .records import AnnotatorRating, CriticLabel, CriticScore, RATING_REJECT


class CriticError(RuntimeError):
    pass


# -- labels ------------------------------------------------------------------


def _regression_target(ratings: list[int | None]) -> float:
    """Map two 1..3 ratings onto [0,1]; any reject (or absence) forces 0."""
    if any(r is None or r == RATING_REJECT for r in ratings):
        return 0.0
    return (sum(ratings) / len(ratings) - 1.0) / 2.0


def derive_labels(instance_id: str, ratings: list[AnnotatorRating]) -> CriticLabel:
    """Fold two annotators' ratings into the critic's training targets.

    binary_accept is 0 as soon as any annotator rejected either criterion;
    a missing rationale rating counts as its auto-reject.
    """
    if len(ratings) != 2:
        raise CriticError(f"exactly two annotator ratings required, got {len(ratings)}")
    qa = [r.qa for r in ratings]
    qar = [r.qar for r in ratings]
    any_reject = any(r == RATING_REJECT for r in qa) or any(
        r is None or r == RATING_REJECT for r in qar
    )
    return CriticLabel(
        instance_id=instance_id,
        annotator_ratings=tuple(ratings),
        binary_accept=0 if any_reject else 1,
        y_qa=_regression_target(qa),
        y_qar=_regression_target(qar),
    )


# -- model -------------------------------------------------------------------


@dataclass
class CriticModelParams:
    w_hidden: np.ndarray  # (h, d)
    b_hidden: np.ndarray  # (h,)
    w_cls: np.ndarray     # (h,)
    b_cls: float
    w_qa: np.ndarray      # (h,)
    b_qa: float
    w_qar: np.ndarray     # (h,)
    b_qar: float
    lam: float = 1.0

    def __post_init__(self):
        self.w_hidden = np.asarray(self.w_hidden, dtype=np.float64)
        self.b_hidden = np.asarray(self.b_hidden, dtype=np.float64)
        for name in ("w_cls", "w_qa", "w_qar"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        h, d = self.w_hidden.shape
        for name in ("w_cls", "w_qa", "w_qar"):
            if getattr(self, name).shape != (h,):
                raise CriticError(f"{name} must have shape ({h},)")
        if self.b_hidden.shape != (h,):
            raise CriticError(f"b_hidden must have shape ({h},)")

    @property
    def input_dim(self) -> int:
        return self.w_hidden.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.w_hidden.shape[0]

    @classmethod
    def zeros(cls, input_dim: int, hidden_dim: int, lam: float = 1.0) -> "CriticModelParams":
        return cls(
            w_hidden=np.zeros((hidden_dim, input_dim)),
            b_hidden=np.zeros(hidden_dim),
            w_cls=np.zeros(hidden_dim), b_cls=0.0,
            w_qa=np.zeros(hidden_dim), b_qa=0.0,
            w_qar=np.zeros(hidden_dim), b_qar=0.0,
            lam=lam,
        )

    @classmethod
    def initialize(cls, input_dim: int, hidden_dim: int, seed: int = 0,
                   lam: float = 1.0) -> "CriticModelParams":
        rng = np.random.default_rng(seed)
        bound = 1.0 / np.sqrt(input_dim)
        u = lambda *shape: rng.uniform(-bound, bound, size=shape)
        return cls(
            w_hidden=u(hidden_dim, input_dim),
            b_hidden=u(hidden_dim),
            w_cls=u(hidden_dim), b_cls=float(u()),
            w_qa=u(hidden_dim), b_qa=float(u()),
            w_qar=u(hidden_dim), b_qar=float(u()),
            lam=lam,
        )

    # flat views used by the optimizer and the finite-difference check
    def to_vector(self) -> np.ndarray:
        return np.concatenate([
            self.w_hidden.ravel(), self.b_hidden,
            self.w_cls, [self.b_cls],
            self.w_qa, [self.b_qa],
            self.w_qar, [self.b_qar],
        ])

    def with_vector(self, vec: np.ndarray) -> "CriticModelParams":
        h, d = self.w_hidden.shape
        parts, offset = [], 0
        for size in (h * d, h, h, 1, h, 1, h, 1):
            parts.append(vec[offset : offset + size])
            offset += size
        return CriticModelParams(
            w_hidden=parts[0].reshape(h, d), b_hidden=parts[1],
            w_cls=parts[2], b_cls=float(parts[3][0]),
            w_qa=parts[4], b_qa=float(parts[5][0]),
            w_qar=parts[6], b_qar=float(parts[7][0]),
            lam=self.lam,
        )

    def version(self) -> str:
        digest = hashlib.sha256(self.to_vector().tobytes()).hexdigest()[:12]
        return f"critic-{digest}"

    def save(self, path: str | Path) -> None:
        payload = {
            "input_dim": self.input_dim,
            "hidden_dim": self.hidden_dim,
            "lam": self.lam,
            "w_hidden": self.w_hidden.tolist(),
            "b_hidden": self.b_hidden.tolist(),
            "w_cls": self.w_cls.tolist(), "b_cls": self.b_cls,
            "w_qa": self.w_qa.tolist(), "b_qa": self.b_qa,
            "w_qar": self.w_qar.tolist(), "b_qar": self.b_qar,
        }
        Path(path).write_text(json.dumps(payload), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "CriticModelParams":
        d = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            w_hidden=np.array(d["w_hidden"]), b_hidden=np.array(d["b_hidden"]),
            w_cls=np.array(d["w_cls"]), b_cls=d["b_cls"],
            w_qa=np.array(d["w_qa"]), b_qa=d["b_qa"],
            w_qar=np.array(d["w_qar"]), b_qar=d["b_qar"],
            lam=d["lam"],
        )


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-5
    batch_size: int = 256
    max_epochs: int = 10
    seed: int = 0
    lam: float = 1.0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("learning_rate, batch_size, and max_epochs must be positive")


@dataclass
class Batch:
    x: np.ndarray        # (n, d)
    accept: np.ndarray   # (n,) in {0,1}
    y_qa: np.ndarray     # (n,)
    y_qar: np.ndarray    # (n,)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.accept = np.asarray(self.accept, dtype=np.float64)
        self.y_qa = np.asarray(self.y_qa, dtype=np.float64)
        self.y_qar = np.asarray(self.y_qar, dtype=np.float64)

    def __len__(self) -> int:
        return self.x.shape[0]

    def subset(self, idx) -> "Batch":
        return Batch(self.x[idx], self.accept[idx], self.y_qa[idx], self.y_qar[idx])


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _forward(params: CriticModelParams, x: np.ndarray):
    hidden = np.tanh(x @ params.w_hidden.T + params.b_hidden)
    z_cls = hidden @ params.w_cls + params.b_cls
    z_qa = hidden @ params.w_qa + params.b_qa
    z_qar = hidden @ params.w_qar + params.b_qar
    return hidden, z_cls, z_qa, z_qar


def loss_components(params: CriticModelParams, batch: Batch) -> tuple[float, float, float]:
    """(BCE, MSE_qa, MSE_qar), each averaged over the batch, unweighted."""
    _, z_cls, z_qa, z_qar = _forward(params, batch.x)
    # stable BCE on logits: max(z,0) - z*y + log1p(exp(-|z|))
    bce = float(np.mean(
        np.maximum(z_cls, 0.0) - z_cls * batch.accept + np.log1p(np.exp(-np.abs(z_cls)))
    ))
    mse_qa = float(np.mean((z_qa - batch.y_qa) ** 2))
    mse_qar = float(np.mean((z_qar - batch.y_qar) ** 2))
    return bce, mse_qa, mse_qar


def loss(params: CriticModelParams, batch: Batch) -> float:
    bce, mse_qa, mse_qar = loss_components(params, batch)
    return bce + params.lam * (mse_qa + mse_qar)


def gradients(params: CriticModelParams, batch: Batch) -> CriticModelParams:
    """Analytic gradient of the multi-task loss w.r.t. every parameter."""
    n = len(batch)
    hidden, z_cls, z_qa, z_qar = _forward(params, batch.x)
    dz_cls = (sigmoid(z_cls) - batch.accept) / n
    dz_qa = params.lam * 2.0 * (z_qa - batch.y_qa) / n
    dz_qar = params.lam * 2.0 * (z_qar - batch.y_qar) / n

    d_hidden = (
        np.outer(dz_cls, params.w_cls)
        + np.outer(dz_qa, params.w_qa)
        + np.outer(dz_qar, params.w_qar)
    )
    d_pre = d_hidden * (1.0 - hidden**2)
    return CriticModelParams(
        w_hidden=d_pre.T @ batch.x,
        b_hidden=d_pre.sum(axis=0),
        w_cls=hidden.T @ dz_cls, b_cls=float(dz_cls.sum()),
        w_qa=hidden.T @ dz_qa, b_qa=float(dz_qa.sum()),
        w_qar=hidden.T @ dz_qar, b_qar=float(dz_qar.sum()),
        lam=params.lam,
    )


def gradient_check(params: CriticModelParams, batch: Batch, step: float = 1e-5) -> float:
    """Max relative error of the analytic gradient vs central differences."""
    analytic = gradients(params, batch).to_vector()
    vec = params.to_vector()
    numeric = np.zeros_like(vec)
    for i in range(vec.size):
        bumped = vec.copy()
        bumped[i] = vec[i] + step
        up = loss(params.with_vector(bumped), batch)
        bumped[i] = vec[i] - step
        down = loss(params.with_vector(bumped), batch)
        numeric[i] = (up - down) / (2.0 * step)
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))


@dataclass
class TrainingLog:
    epoch_losses: list[float] = field(default_factory=list)


def train_critic(features, labels: list[CriticLabel], cfg: TrainConfig,
                 hidden_dim: int = 16) -> tuple[CriticModelParams, TrainingLog]:
    """Mini-batch gradient descent on the multi-task loss, seeded shuffling."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != len(labels) or len(labels) < 1:
        raise CriticError("need one feature row per label, at least one")
    data = Batch(
        x=x,
        accept=np.array([lab.binary_accept for lab in labels], dtype=np.float64),
        y_qa=np.array([lab.y_qa for lab in labels]),
        y_qar=np.array([lab.y_qar for lab in labels]),
    )
    params = CriticModelParams.initialize(x.shape[1], hidden_dim, seed=cfg.seed, lam=cfg.lam)
    rng = np.random.default_rng(cfg.seed)
    log = TrainingLog()
    n = len(data)
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        batches = 0
        for start in range(0, n, cfg.batch_size):
            sub = data.subset(order[start : start + cfg.batch_size])
            value = loss(params, sub)
            if not np.isfinite(value):
                raise CriticError(f"non-finite loss at epoch {epoch}, batch {batches}")
            grad = gradients(params, sub)
            params = params.with_vector(
                params.to_vector() - cfg.learning_rate * grad.to_vector()
            )
            epoch_loss += value
            batches += 1
        log.epoch_losses.append(epoch_loss / batches)
    return params, log


# -- scoring and evaluation ---------------------------------------------------


def featurize(instance, bundle, backend) -> list[float]:
    """Embedding of the bundle context concatenated with the QAR text."""
    from .verbalize import render_context

    if instance.image_id != bundle.image_id:
        raise CriticError(
            f"instance {instance.instance_id!r} does not belong to image {bundle.image_id!r}"
        )
    text = "\n".join([
        render_context(bundle), instance.question, instance.answer, instance.rationale
    ])
    return backend.embed(texts=[text])[0]


def score_value(params: CriticModelParams, feature) -> float:
    f = np.asarray(feature, dtype=np.float64)
    if f.shape != (params.input_dim,):
        raise CriticError(f"feature shape {f.shape} != ({params.input_dim},)")
    _, z_cls, _, _ = _forward(params, f[None, :])
    return float(sigmoid(z_cls)[0])


def score_instance(params: CriticModelParams, feature, instance_id: str = "") -> CriticScore:
    """Classification-head probability as the instance's acceptability score."""
    return CriticScore(
        instance_id=instance_id,
        score=score_value(params, feature),
        model_version=params.version(),
    )


@dataclass(frozen=True)
class EvalMetrics:
    precision: float
    recall: float
    f1: float
    no_positive_predictions: bool = False


def evaluate_critic(params: CriticModelParams, features, accept_labels,
                    threshold: float = 0.5) -> EvalMetrics:
    """Binary precision/recall/F1 at the given decision threshold."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(accept_labels, dtype=np.int64)
    if len(y) == 0:
        raise CriticError("labeled set must be non-empty")
    _, z_cls, _, _ = _forward(params, x)
    pred = (sigmoid(z_cls) > threshold).astype(np.int64)
    tp = int(np.sum((pred == 1) & (y == 1)))
    fp = int(np.sum((pred == 1) & (y == 0)))
    fn = int(np.sum((pred == 0) & (y == 1)))
    if tp + fp == 0:
        precision, flagged = 0.0, True
    else:
        precision, flagged = tp / (tp + fp), False
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return EvalMetrics(precision=precision, recall=recall, f1=f1,
                       no_positive_predictions=flagged)
