"""Modified Lepski rule for choosing the truncation level at the central machine.

Given the nested estimates ``f~(0), ..., f~(j_max)`` (``f~(j)`` keeps levels
``< j``), the L2 rule picks the smallest ``j`` with

    ||f~(j) - f~(l)||_2^2 <= tau 2^l / n_l   for every l > j,

and the sup-norm rule the smallest ``j`` with
``||f~(j) - f~(l)||_inf <= tau sqrt(l 2^l / n_l)``.  ``j_max`` always
qualifies, so the selection is total.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..wavelets import CoeffField, WaveletBasis, synthesize

__all__ = [
    "nested_estimates",
    "lepski_select_l2",
    "lepski_select_linfty",
    "l2_distances",
    "tau_for_zero_selection",
]


def nested_estimates(field_: CoeffField, j_max: int) -> list[CoeffField]:
    """``f~(j)`` for ``j = 0..j_max``: the field truncated below level ``j``."""
    return [field_.truncated(j) for j in range(j_max + 1)]


def l2_distances(estimates: Sequence[CoeffField]) -> np.ndarray:
    """Matrix of ``||f~(j) - f~(l)||_2^2`` (exact via Parseval)."""
    k = len(estimates)
    out = np.zeros((k, k))
    for j in range(k):
        for l in range(j + 1, k):
            out[j, l] = out[l, j] = (estimates[j] - estimates[l]).squared_norm()
    return out


def _thresholds_l2(n_levels: Sequence[float], tau: float) -> np.ndarray:
    n_levels = np.asarray(n_levels, dtype=float)
    l = np.arange(n_levels.size)
    with np.errstate(divide="ignore"):
        return tau * 2.0 ** l / n_levels


def _select(dist: np.ndarray, thresholds: np.ndarray) -> int:
    top = dist.shape[0] - 1
    for j in range(top + 1):
        if np.all(dist[j, j + 1:] <= thresholds[j + 1:]):
            return j
    return top  # pragma: no cover - the last row has an empty condition set


def lepski_select_l2(estimates: Sequence[CoeffField], tau: float, n_levels: Sequence[float]) -> int:
    """Smallest admissible level under the squared L2 rule."""
    if len(n_levels) != len(estimates):
        raise ValueError("need one sample size per candidate level")
    return _select(l2_distances(estimates), _thresholds_l2(n_levels, tau))


def linfty_distances(estimates: Sequence[CoeffField], basis: WaveletBasis) -> np.ndarray:
    k = len(estimates)
    top = k - 1
    grid = 1 << (top + 3)
    out = np.zeros((k, k))
    for j in range(k):
        for l in range(j + 1, k):
            diff = (estimates[j] - estimates[l]).padded(max(l - 1, 0))
            out[j, l] = out[l, j] = float(np.max(np.abs(synthesize(basis, diff, grid))))
    return out


def lepski_select_linfty(
    estimates: Sequence[CoeffField], tau: float, n_levels: Sequence[float], basis: WaveletBasis
) -> int:
    """Smallest admissible level under the sup-norm rule (grid of ``2^{j_max+3}`` points)."""
    if len(n_levels) != len(estimates):
        raise ValueError("need one sample size per candidate level")
    n_levels = np.asarray(n_levels, dtype=float)
    l = np.arange(n_levels.size)
    with np.errstate(divide="ignore"):
        thresholds = tau * np.sqrt(l * 2.0 ** l / n_levels)
    return _select(linfty_distances(estimates, basis), thresholds)


def tau_for_zero_selection(
    estimates: Sequence[CoeffField],
    n_levels: Sequence[float],
    norm: str = "l2",
    basis: WaveletBasis | None = None,
) -> float:
    """Smallest ``tau`` for which the rule returns level 0 on these estimates."""
    n_levels = np.asarray(n_levels, dtype=float)
    if len(estimates) < 2:
        return 0.0
    l = np.arange(1, n_levels.size)
    if norm == "l2":
        dist = l2_distances(estimates)[0, 1:]
        scale = 2.0 ** l / n_levels[1:]
    else:
        dist = linfty_distances(estimates, basis)[0, 1:]
        scale = np.sqrt(l * 2.0 ** l / n_levels[1:])
    return float(np.max(dist / scale))
