"""Slow, obviously-correct reference implementations used as test oracles."""

from __future__ import annotations

import itertools

import numpy as np


def naive_conv(x: np.ndarray, filters: np.ndarray, dilation: int) -> np.ndarray:
    """Triple loop: out[s, o] = sum_c sum_i f[o, c, i] * x[s - d*i, c], zero before the start."""
    n, c_in = x.shape
    c_out, _, k = filters.shape
    out = np.zeros((n, c_out))
    for s in range(n):
        for o in range(c_out):
            acc = 0.0
            for i in range(k):
                t = s - dilation * i
                if t < 0:
                    continue
                for c in range(c_in):
                    acc += filters[o, c, i] * x[t, c]
            out[s, o] = acc
    return out


def brute_f1(y_true: np.ndarray, y_pred: np.ndarray) -> tuple[float, float]:
    """(micro, macro) F1 by explicit counting; an empty denominator gives 0."""

    def f1(tp, fp, fn):
        return 0.0 if 2 * tp + fp + fn == 0 else 2 * tp / (2 * tp + fp + fn)

    tps = fps = fns = 0
    per = []
    for j in range(y_true.shape[1]):
        tp = fp = fn = 0
        for i in range(y_true.shape[0]):
            t, p = bool(y_true[i, j]), bool(y_pred[i, j])
            tp += t and p
            fp += p and not t
            fn += t and not p
        per.append(f1(tp, fp, fn))
        tps, fps, fns = tps + tp, fps + fp, fns + fn
    return f1(tps, fps, fns), float(np.mean(per))


def brute_auc(y: np.ndarray, s: np.ndarray) -> float | None:
    """Probability a random positive outscores a random negative, ties counting one half."""
    pos = [s[i] for i in range(len(y)) if y[i] == 1]
    neg = [s[i] for i in range(len(y)) if y[i] == 0]
    if not pos or not neg:
        return None
    wins = 0.0
    for a, b in itertools.product(pos, neg):
        wins += 1.0 if a > b else 0.5 if a == b else 0.0
    return wins / (len(pos) * len(neg))
