"""Monte Carlo experiments: replicated runs, risks, slope fits and reports.

Every replicate gets its own seed derived from ``(master seed, cell, replicate)``
so results do not depend on execution order or on the pool used.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from . import theory
from .bitcodec import expected_length_audit
from .config import ProtocolConfig
from .errors import DegenerateSpreadError, DistwaveError
from .protocols import nested_estimates, run_protocol, tau_for_zero_selection
from .wavelets import CoeffField, WaveletBasis, synthesize

__all__ = [
    "risk_l2",
    "risk_linf",
    "fit_rate_slope",
    "replicate_seed",
    "ReplicateResult",
    "CellResult",
    "ExperimentReport",
    "run_replicate",
    "run_sweep",
    "calibrate_tau",
    "TauCalibration",
    "CSV_COLUMNS",
]

MapFn = Callable[[Callable, Iterable], Iterable]

CSV_COLUMNS = ("n", "m", "B", "s", "mode", "mean_risk_l2", "se", "mean_risk_linf", "mean_jhat", "max_payload_bits")


def _common(a: CoeffField, b: CoeffField) -> tuple[CoeffField, CoeffField]:
    top = max(a.max_level, b.max_level)
    return a.padded(top), b.padded(top)


def risk_l2(estimate: CoeffField, truth: CoeffField) -> float:
    """Squared L2 distance, exact by Parseval."""
    a, b = _common(estimate, truth)
    return (a - b).squared_norm()


def risk_linf(estimate: CoeffField, truth: CoeffField, basis: WaveletBasis, grid: int | None = None) -> float:
    """Sup distance on the dyadic midpoint grid (default ``2^{J+3}``)."""
    a, b = _common(estimate, truth)
    size = grid or 1 << (a.max_level + 3)
    if size < 1 << (a.max_level + 3):
        raise ValueError(f"grid {size} below 2^(J+3) for J = {a.max_level}")
    return float(np.max(np.abs(synthesize(basis, a - b, size))))


def fit_rate_slope(points: Sequence[tuple[float, float]]) -> tuple[float, float]:
    """Least-squares slope of ``log2 risk`` on ``log2 n`` and twice its standard error.

    Raises
    ------
    DegenerateSpreadError
        With fewer than 4 points or ``n`` spanning less than two octaves.
    """
    if len(points) < 4:
        raise DegenerateSpreadError(f"need at least 4 points, got {len(points)}")
    x = np.log2(np.array([p[0] for p in points], dtype=float))
    y = np.log2(np.array([p[1] for p in points], dtype=float))
    if not np.all(np.isfinite(y)):
        raise DegenerateSpreadError("risk values must be positive")
    if x.max() - x.min() < 2:
        raise DegenerateSpreadError("n values span less than two octaves")
    xc = x - x.mean()
    sxx = float(xc @ xc)
    slope = float(xc @ (y - y.mean())) / sxx
    resid = y - y.mean() - slope * xc
    dof = len(points) - 2
    se = math.sqrt(float(resid @ resid) / dof / sxx)
    return slope, 2.0 * se


def replicate_seed(master: int, cell: int, rep: int) -> int:
    seq = np.random.SeedSequence(master, spawn_key=(cell, rep))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


@dataclass
class ReplicateResult:
    seed: int
    risk_l2: float
    risk_linf: float
    jhat: int | None
    payload_bits: list[int]
    framing_bits: list[int]
    overrun: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class CellResult:
    index: int
    config: ProtocolConfig
    replicates: list[ReplicateResult] = field(default_factory=list)
    error: dict | None = None
    reference: dict | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def _col(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.replicates], dtype=float)

    @property
    def mean_risk_l2(self) -> float:
        return float(np.mean(self._col("risk_l2"))) if self.replicates else math.nan

    @property
    def se_risk_l2(self) -> float:
        k = len(self.replicates)
        if k < 2:
            return 0.0
        return float(np.std(self._col("risk_l2"), ddof=1) / math.sqrt(k))

    @property
    def mean_risk_linf(self) -> float:
        return float(np.mean(self._col("risk_linf"))) if self.replicates else math.nan

    @property
    def mean_jhat(self) -> float | None:
        vals = [r.jhat for r in self.replicates if r.jhat is not None]
        return float(np.mean(vals)) if vals else None

    @property
    def max_payload_bits(self) -> int:
        return max((max(r.payload_bits, default=0) for r in self.replicates), default=0)

    def mean_payload_per_machine(self) -> list[float]:
        if not self.replicates:
            return []
        arr = np.array([r.payload_bits for r in self.replicates], dtype=float)
        return arr.mean(axis=0).tolist()

    def summary(self) -> dict:
        mean_pay = self.mean_payload_per_machine()
        return {
            "mean_risk_l2": self.mean_risk_l2,
            "se": self.se_risk_l2,
            "mean_risk_linf": self.mean_risk_linf,
            "mean_jhat": self.mean_jhat,
            "max_payload_bits": self.max_payload_bits,
            "max_mean_payload_bits": max(mean_pay, default=0.0),
            "budget_ok": max(mean_pay, default=0.0) <= self.config.B,
            "overruns": sum(r.overrun for r in self.replicates),
        }

    def to_dict(self) -> dict:
        out = {"index": self.index, "config": self.config.to_dict(), "replicate_count": len(self.replicates)}
        if self.error is not None:
            out["error"] = self.error
            return out
        out["summary"] = self.summary()
        out["reference"] = self.reference
        out["replicates"] = [r.to_dict() for r in self.replicates]
        return out


@dataclass
class ExperimentReport:
    base: ProtocolConfig
    axis: str
    values: list
    replicates: int
    master_seed: int
    cells: list[CellResult]

    def points(self, metric: str = "mean_risk_l2") -> list[tuple[float, float]]:
        return [(c.config.n, getattr(c, metric)) for c in self.cells if c.ok]

    def slope(self, metric: str = "mean_risk_l2") -> tuple[float, float]:
        return fit_rate_slope(self.points(metric))

    def _slopes(self) -> dict:
        out = {}
        if self.axis != "n":
            return out
        for metric in ("mean_risk_l2", "mean_risk_linf"):
            try:
                slope, half = self.slope(metric)
                out[metric] = {"slope": slope, "half_width": half}
            except DegenerateSpreadError as exc:
                out[metric] = {"error": str(exc)}
        return out

    def to_dict(self) -> dict:
        return {
            "base_config": self.base.to_dict(),
            "axis": self.axis,
            "values": list(self.values),
            "replicates": self.replicates,
            "master_seed": self.master_seed,
            "cells": [c.to_dict() for c in self.cells],
            "slopes": self._slopes(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1, default=_json_default) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS + ("error",))
        for c in self.cells:
            cfg = c.config
            if c.ok:
                jh = c.mean_jhat
                row = [cfg.n, cfg.m, repr(cfg.B), repr(cfg.s), cfg.mode, repr(c.mean_risk_l2),
                       repr(c.se_risk_l2), repr(c.mean_risk_linf), "" if jh is None else repr(jh),
                       c.max_payload_bits, ""]
            else:
                row = [cfg.n, cfg.m, repr(cfg.B), repr(cfg.s), cfg.mode, "", "", "", "", "", c.error["type"]]
            writer.writerow(row)
        return buf.getvalue()


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    raise TypeError(type(obj))


def run_replicate(cfg: ProtocolConfig, linf: bool = True) -> ReplicateResult:
    """One protocol run scored against its own truth."""
    run = run_protocol(cfg)
    est, truth = run.estimate.field, run.truth
    return ReplicateResult(
        seed=cfg.seed,
        risk_l2=risk_l2(est, truth),
        risk_linf=risk_linf(est, truth, cfg.basis()) if linf else math.nan,
        jhat=run.estimate.jhat,
        payload_bits=[led.payload_bits for led in run.estimate.ledgers],
        framing_bits=[led.framing_bits for led in run.estimate.ledgers],
        overrun=any(t.overrun for t in run.transmissions),
    )


def _reference(cfg: ProtocolConfig) -> dict:
    rep = theory.classify_regime(cfg.n, cfg.m, cfg.B, cfg.s, cfg.L)
    out = {
        "regime": rep.regime,
        "delta_n": rep.delta_n,
        "lb_rate_l2": rep.lower_bound_rate,
        "lb_rate_linf": rep.lower_bound_rate_linf,
    }
    if cfg.mode == "adaptive":
        j_star, n_j = theory.optimal_level(cfg.n, cfg.m, cfg.B, cfg.s, cfg.L, cfg.norm, cfg.s_min)
        out["j_star"] = j_star
        out["n_j_star"] = n_j
    return out


def _error_record(exc: Exception) -> dict:
    return {"type": type(exc).__name__, "message": str(exc)}


def run_sweep(
    base: ProtocolConfig,
    axis: str,
    values: Sequence,
    replicates: int,
    map_fn: MapFn | None = None,
    master_seed: int | None = None,
    linf: bool = True,
) -> ExperimentReport:
    """Replicated runs of ``base`` with ``axis`` set to each of ``values``.

    A cell whose configuration or schedule is invalid is kept in the report
    with a structured error instead of aborting the sweep.
    """
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    master = base.seed if master_seed is None else master_seed
    cells: list[CellResult] = []
    tasks = []
    for ci, value in enumerate(values):
        try:
            cfg = base.replace(**{axis: value})
        except (DistwaveError, TypeError, ValueError) as exc:
            cell = CellResult(ci, base, error=_error_record(exc))
            cell.error["value"] = value
            cells.append(cell)
            continue
        cells.append(CellResult(ci, cfg))
        tasks.extend((ci, r) for r in range(replicates))

    by_index = {c.index: c for c in cells}

    def work(task):
        ci, r = task
        cfg = by_index[ci].config.replace(seed=replicate_seed(master, ci, r))
        try:
            return ci, run_replicate(cfg, linf)
        except DistwaveError as exc:
            return ci, exc

    for ci, result in (map_fn or map)(work, tasks):
        cell = by_index[ci]
        if isinstance(result, Exception):
            if cell.error is None:
                cell.error = _error_record(result)
        elif cell.error is None:
            cell.replicates.append(result)
    for cell in cells:
        if cell.error is not None:
            cell.replicates = []
            continue
        cell.replicates.sort(key=lambda r: r.seed)
        cell.reference = _reference(cell.config)
        audit = expected_length_audit([], cell.config.n, cell.config.D)
        cell.reference["slack_bits"] = audit.slack_bits
    return ExperimentReport(base, axis, list(values), replicates, master, cells)


@dataclass
class TauCalibration:
    """Per-replicate minimal ``tau`` giving ``jhat = 0`` and the chosen quantile."""

    tau: float
    target_rate: float
    replicates: int
    samples: list[float]

    def zero_rate(self, tau: float) -> float:
        return float(np.mean(np.array(self.samples) <= tau))

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "target_rate": self.target_rate,
            "replicates": self.replicates,
            "achieved_rate": self.zero_rate(self.tau),
            "samples": self.samples,
        }


def _tau_sample(cfg: ProtocolConfig) -> float:
    run = run_protocol(cfg)
    layout = run.schedule.layout
    coeffs = run.estimate.coefficients
    estimates = nested_estimates(coeffs.padded(max(layout.j_max - 1, coeffs.max_level)), layout.j_max)
    return tau_for_zero_selection(estimates, layout.level_sizes, cfg.norm, cfg.basis())


def calibrate_tau(
    base: ProtocolConfig,
    replicates: int = 100,
    rate: float = 0.95,
    map_fn: MapFn | None = None,
) -> TauCalibration:
    """Smallest ``tau`` for which the zero signal selects level 0 in ``rate`` of replicates.

    Each replicate yields the exact threshold ``tau_r`` at which its selection
    switches to 0, so the answer is the ``ceil(rate R)``-th order statistic,
    floored just above 1 to stay a valid Lepski constant.
    """
    cfg0 = base.replace(signal="zero", mode="adaptive")
    seeds = [replicate_seed(base.seed, 0, r) for r in range(replicates)]
    samples = list((map_fn or map)(lambda sd: _tau_sample(cfg0.replace(seed=sd)), seeds))
    ordered = sorted(samples)
    k = max(math.ceil(rate * replicates - 1e-9), 1)
    tau = max(ordered[k - 1], math.nextafter(1.0, 2.0))
    return TauCalibration(tau, rate, replicates, samples)
