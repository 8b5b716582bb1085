"""Multi-label evaluation: micro/macro F1, micro/macro AUC-ROC and precision@k."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import rankdata

METRIC_NAMES = ("macro_auc", "micro_auc", "macro_f1", "micro_f1", "precision_at_k")


@dataclass
class LabelScore:
    label: str
    precision: float
    recall: float
    f1: float
    auc: float | None


@dataclass
class EvalReport:
    macro_auc: float | None
    micro_auc: float | None
    macro_f1: float
    micro_f1: float
    precision_at_k: float
    k: int = 5
    per_label: list[LabelScore] = field(default_factory=list)

    def metric(self, name: str) -> float | None:
        if name not in METRIC_NAMES:
            raise KeyError(f"unknown metric {name!r}")
        return getattr(self, name)

    def summary(self) -> dict:
        return {name: getattr(self, name) for name in METRIC_NAMES} | {"k": self.k}

    def to_text(self) -> str:
        """Flat ``key=value`` lines in a fixed order; undefined values print as ``undefined``."""
        lines = []
        for key, value in self.summary().items():
            lines.append(f"{key}={_fmt(value)}")
        for s in self.per_label:
            lines.append(
                f"label.{s.label}=precision:{_fmt(s.precision)},recall:{_fmt(s.recall)},"
                f"f1:{_fmt(s.f1)},auc:{_fmt(s.auc)}"
            )
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        d = json.loads(text)
        d["per_label"] = [LabelScore(**s) for s in d.get("per_label", [])]
        return cls(**d)


def _fmt(value) -> str:
    if value is None:
        return "undefined"
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def _check(y_true, other):
    y_true = np.asarray(y_true)
    other = np.asarray(other)
    if y_true.ndim != 2 or y_true.shape != other.shape:
        raise ValueError(f"expected matching N x m arrays, got {y_true.shape} and {other.shape}")
    if y_true.shape[0] == 0:
        raise ValueError("no examples to evaluate")
    return y_true.astype(bool), other


def _f1(tp, fp, fn):
    denom = 2 * tp + fp + fn
    return np.where(denom > 0, 2 * tp / np.maximum(denom, 1), 0.0)


def f1_scores(y_true, y_pred):
    """Returns ``(micro_f1, macro_f1, per_label)``, per_label rows = (precision, recall, f1)."""
    y_true, y_pred = _check(y_true, y_pred)
    y_pred = y_pred.astype(bool)
    tp = (y_true & y_pred).sum(axis=0).astype(float)
    fp = (~y_true & y_pred).sum(axis=0).astype(float)
    fn = (y_true & ~y_pred).sum(axis=0).astype(float)
    per_f1 = _f1(tp, fp, fn)
    precision = np.where(tp + fp > 0, tp / np.maximum(tp + fp, 1), 0.0)
    recall = np.where(tp + fn > 0, tp / np.maximum(tp + fn, 1), 0.0)
    micro = float(_f1(tp.sum(), fp.sum(), fn.sum()))
    macro = float(per_f1.mean())
    return micro, macro, np.stack([precision, recall, per_f1], axis=1)


def binary_auc(y_true, y_score) -> float | None:
    """Probability that a random positive outscores a random negative (ties count half).

    ``None`` when only one class is present.
    """
    y_true = np.asarray(y_true, dtype=bool).ravel()
    y_score = np.asarray(y_score, dtype=float).ravel()
    n_pos = int(y_true.sum())
    n_neg = y_true.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = rankdata(y_score)
    u = ranks[y_true].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auc_scores(y_true, y_score):
    """Returns ``(micro_auc, macro_auc, per_label)``; undefined entries are ``None``.

    Micro pools every (example, label) pair into one binary problem; macro
    averages over labels with at least one positive and one negative.
    """
    y_true, y_score = _check(y_true, y_score)
    per = [binary_auc(y_true[:, j], y_score[:, j]) for j in range(y_true.shape[1])]
    defined = [a for a in per if a is not None]
    macro = float(np.mean(defined)) if defined else None
    micro = binary_auc(y_true, y_score)
    return micro, macro, per


def precision_at_k(y_true, y_score, k: int = 5) -> float:
    y_true, y_score = _check(y_true, y_score)
    m = y_true.shape[1]
    if not 1 <= k <= m:
        raise ValueError(f"k={k} must be between 1 and the number of labels ({m})")
    order = np.argsort(-np.asarray(y_score, dtype=float), axis=1, kind="stable")[:, :k]
    hits = np.take_along_axis(y_true, order, axis=1)
    return float(hits.mean())


def evaluate(y_true, y_score, labels=None, threshold: float = 0.5, k: int = 5) -> EvalReport:
    """All five metrics; F1 uses ``y_score >= threshold`` as the prediction."""
    y_true = np.asarray(y_true)
    y_score = np.asarray(y_score, dtype=float)
    m = y_true.shape[1]
    if labels is None:
        labels = [str(j) for j in range(m)]
    micro_f1, macro_f1, per_f1 = f1_scores(y_true, y_score >= threshold)
    micro_auc, macro_auc, per_auc = auc_scores(y_true, y_score)
    p_at_k = precision_at_k(y_true, y_score, min(k, m))
    per_label = [
        LabelScore(str(labels[j]), float(per_f1[j, 0]), float(per_f1[j, 1]), float(per_f1[j, 2]), per_auc[j])
        for j in range(m)
    ]
    return EvalReport(macro_auc, micro_auc, macro_f1, micro_f1, p_at_k, min(k, m), per_label)
