"""Label-smoothed BCE, Adam and the epoch loop with early stopping."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import numcore as nc
from .data import LabeledExample, make_batches
from .errors import ShapeError
from .metrics import METRIC_NAMES, EvalReport, evaluate
from .model import ModelConfig, ModelParams, check_params, model_logits
from .numcore import RngStream, Tape, Tensor

log = logging.getLogger(__name__)


def smooth_labels(y, alpha: float) -> np.ndarray:
    """``y * (1 - alpha) + alpha / m`` with ``m`` the size of the last axis."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"smoothing alpha must be in [0, 1], got {alpha}")
    y = np.asarray(y, dtype=float)
    m = y.shape[-1]
    return y * (1.0 - alpha) + alpha / m


def bce_loss(y_target, logits) -> Tensor:
    """Summed binary cross-entropy per example, averaged over a batch axis if present.

    Takes logits rather than probabilities so saturated predictions never
    produce ``log(0)``.
    """
    logits = logits if isinstance(logits, Tensor) else Tensor(np.asarray(logits, dtype=float))
    return nc.bce_with_logits(logits, y_target)


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    mom1: dict[str, np.ndarray] = field(default_factory=dict)
    mom2: dict[str, np.ndarray] = field(default_factory=dict)

    def hyper(self) -> dict:
        return {"lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps, "t": self.t}


def adam_step(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray | None], state: AdamState) -> None:
    """One bias-corrected Adam update, applied to the arrays in ``params`` in place.

    A missing gradient counts as zero.
    """
    state.t += 1
    t = state.t
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        elif g.shape != p.shape:
            raise ShapeError(f"{name}: gradient shape {g.shape} != parameter shape {p.shape}")
        m = state.mom1.get(name)
        if m is None:
            m = state.mom1[name] = np.zeros_like(p)
            state.mom2[name] = np.zeros_like(p)
        v = state.mom2[name]
        if m.shape != p.shape or v.shape != p.shape:
            raise ShapeError(f"{name}: optimizer state shape {m.shape} != parameter shape {p.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= (state.lr / bc1) * m / (np.sqrt(v / bc2) + state.eps)


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 16
    lr: float = 5e-3
    alpha: float = 0.1
    # Training sits on a plateau (all labels predicted negative) for a few
    # epochs before the attention locks onto triggers; patience must outlast it.
    patience: int = 10
    seed: int = 0
    selection_metric: str = "micro_f1"
    threshold: float = 0.5
    k: int = 5
    bucket: int = 8

    def validate(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.lr < 0:
            raise ValueError("lr must be non-negative")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must be in [0, 1]")
        if self.patience < 0:
            raise ValueError("patience must be non-negative")
        if self.selection_metric not in METRIC_NAMES:
            raise ValueError(f"selection_metric must be one of {METRIC_NAMES}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainResult:
    best_params: ModelParams
    params: ModelParams
    state: AdamState
    history: list[dict]
    best_epoch: int
    epoch: int
    rng_states: dict


def predict_scores(params: ModelParams, config: ModelConfig, examples: Sequence[LabeledExample],
                   batch_size: int = 32) -> np.ndarray:
    """Inference-mode probabilities, ``(len(examples), m)``, in input order.

    Examples are grouped by length to limit padding; the grouping is fixed so
    repeated calls give bitwise-identical scores.
    """
    if not examples:
        raise ValueError("no examples to score")
    order = np.argsort([len(e.token_ids) for e in examples], kind="stable")
    ordered = [examples[i] for i in order]
    out = np.empty((len(examples), config.num_labels), dtype=float)
    with nc.no_grad():
        for batch in make_batches(ordered, batch_size):
            probs = nc.sigmoid(model_logits(batch.ids, params, config, False, None, batch.mask))
            out[order[batch.indices]] = probs.data
    return out


def evaluate_model(params, config, examples, labels=None, threshold=0.5, k=5, batch_size=32) -> EvalReport:
    y_true = np.stack([e.labels for e in examples])
    return evaluate(y_true, predict_scores(params, config, examples, batch_size), labels, threshold, k)


def _score(report: EvalReport, metric: str) -> float:
    value = report.metric(metric)
    return -math.inf if value is None else value


def train(
    params: ModelParams,
    config: ModelConfig,
    train_examples: Sequence[LabeledExample],
    dev_examples: Sequence[LabeledExample],
    train_config: TrainConfig,
    labels: Sequence[str] | None = None,
    state: AdamState | None = None,
    start_epoch: int = 0,
    history: list[dict] | None = None,
    rng_states: dict | None = None,
    best_params: ModelParams | None = None,
    on_epoch: Callable[[dict], None] | None = None,
) -> TrainResult:
    """Minibatch Adam with dev-set model selection and early stopping.

    ``params`` is updated in place; the best snapshot by
    ``train_config.selection_metric`` is returned separately. Passing a
    previous ``state``/``start_epoch``/``history``/``rng_states`` (and the
    best snapshot so far) resumes a run. Training stops after ``patience``
    consecutive epochs without improvement.
    """
    train_config.validate()
    if not train_examples or not dev_examples:
        raise ValueError("train and dev splits must be non-empty")
    check_params(params, config)
    dtype = config.np_dtype
    tc = train_config
    if state is None:
        state = AdamState(lr=tc.lr)
    shuffle_rng = RngStream(tc.seed, 1)
    dropout_rng = RngStream(tc.seed, 2)
    if rng_states:
        shuffle_rng.set_state(rng_states["shuffle"])
        dropout_rng.set_state(rng_states["dropout"])
    history = list(history or [])

    def dev_report():
        return evaluate_model(params, config, dev_examples, labels, tc.threshold, tc.k, tc.batch_size)

    def emit(entry):
        history.append(entry)
        if on_epoch is not None:
            on_epoch(entry)

    if start_epoch == 0 and not history:
        report = dev_report()
        emit({"epoch": 0, "step": state.t, "train_loss": None, **report.summary()})
    best_entry = max(history, key=lambda e: (_score_entry(e, tc.selection_metric), -e["epoch"]))
    best_score = _score_entry(best_entry, tc.selection_metric)
    best_epoch = best_entry["epoch"]
    best_params = best_params.copy() if best_params is not None else params.copy()
    stale = history[-1]["epoch"] - best_epoch

    epoch = start_epoch
    while epoch < tc.epochs and (stale == 0 or stale < tc.patience):
        epoch += 1
        batches = make_batches(train_examples, tc.batch_size, shuffle_rng, shuffle=True, bucket=tc.bucket)
        total = 0.0
        for batch in batches:
            params.zero_grad()
            targets = smooth_labels(batch.labels, tc.alpha).astype(dtype)
            with Tape() as tape:
                logits = model_logits(batch.ids, params, config, True, dropout_rng, batch.mask)
                loss = nc.bce_with_logits(logits, targets)
            nc.backward(loss, tape)
            adam_step({n: t.data for n, t in params.items()}, {n: t.grad for n, t in params.items()}, state)
            total += float(loss.data) * len(batch.indices)
        params.zero_grad()
        report = dev_report()
        entry = {"epoch": epoch, "step": state.t, "train_loss": total / len(train_examples), **report.summary()}
        emit(entry)
        log.info("epoch=%d step=%d train_loss=%.6f %s=%s", epoch, state.t, entry["train_loss"],
                 tc.selection_metric, entry[tc.selection_metric])
        score = _score(report, tc.selection_metric)
        if score > best_score:
            best_score, best_epoch, best_params = score, epoch, params.copy()
            stale = 0
        else:
            stale += 1
    rng_out = {"shuffle": shuffle_rng.get_state(), "dropout": dropout_rng.get_state()}
    return TrainResult(best_params, params, state, history, best_epoch, epoch, rng_out)


def _score_entry(entry: dict, metric: str) -> float:
    value = entry.get(metric)
    return -math.inf if value is None else value
