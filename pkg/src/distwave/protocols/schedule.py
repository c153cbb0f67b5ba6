"""Which machine transmits which wavelet coefficient.

Coefficients are addressed by their heap index ``idx = 2^j + k``; machine
ids are 0-based.  Group sizes always use floor division and the machines
left over are discarded (they transmit nothing), recorded in
``Schedule.discarded``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..bitcodec import fractional_digits
from ..config import ProtocolConfig
from ..errors import ConfigError, InfeasibleScheduleError

__all__ = ["Schedule", "AdaptiveLayout", "adaptive_layout", "build_schedule", "case_ii_groups", "linfty_groups"]

# guards floor() against 1e-16 shortfalls when a power lands on an integer
_EPS = 1e-12


def _floor(x: float) -> int:
    return math.floor(x * (1 + _EPS))


@dataclass(frozen=True)
class Schedule:
    mode: str
    n: int
    m: int
    assignments: tuple[tuple[int, ...], ...]
    labels: tuple[str, ...]
    owners: dict[int, tuple[int, ...]] = field(repr=False)
    eta: int = 1
    discarded: int = 0
    layout: AdaptiveLayout | None = None
    nominal_payload: tuple[int, ...] = ()

    @property
    def max_index(self) -> int:
        return max(self.owners, default=0)

    @property
    def max_level(self) -> int:
        return max(self.max_index.bit_length() - 1, 0)

    def indices(self, machine: int) -> tuple[int, ...]:
        return self.assignments[machine]

    def active_machines(self) -> list[int]:
        return [i for i, a in enumerate(self.assignments) if a]

    def message_count(self) -> int:
        return sum(len(a) for a in self.assignments)


@dataclass(frozen=True)
class AdaptiveLayout:
    """Machine partition for the adaptive method.

    ``level_sizes[j]`` is ``n_j``, the number of observations behind each
    aggregated coefficient of level ``j`` for ``j = 0..j_max``.  Level
    ``j_max`` is never transmitted; its entry continues the halving ladder
    without the final floor (``per_level 2^{-eta_tilde} n/m``).
    """

    j_bn: int
    j_max: int
    eta_tilde: int
    s_min: float
    group_I: int
    per_level: int
    subgroup_sizes: tuple[int, ...]
    level_sizes: tuple[float, ...]

    @property
    def feasible(self) -> bool:
        return all(size >= 1 for size in self.subgroup_sizes) and (self.j_bn == 0 or self.group_I >= 1)


def adaptive_layout(n: int, m: int, B: float, s_min: float) -> AdaptiveLayout:
    """Compute ``j_{B,n}``, ``j_max``, the group sizes and the ``n_j`` ladder."""
    lg = math.log2(n)
    b = _floor(B / lg)
    if b < 1:
        raise InfeasibleScheduleError(f"floor(B / log2 n) = 0 for B = {B}, n = {n}; need B >= log2 n")
    j_bn = b.bit_length() - 1
    j_max = min(
        math.ceil(math.log2(n * B) / (2 + 2 * s_min) - _EPS),
        math.ceil(lg / (1 + 2 * s_min) - _EPS),
    )
    j_max = max(j_max, 0)
    eta_tilde = max(j_max - j_bn, 0)
    group_I = m // 2
    half = m - group_I
    per_level = half // eta_tilde if eta_tilde else 0
    subgroup_sizes = tuple(per_level >> t for t in range(eta_tilde))
    per = n / m
    sizes = []
    for j in range(j_max + 1):
        if j < j_bn:
            sizes.append(group_I * per)
        elif j - j_bn < eta_tilde:
            sizes.append(subgroup_sizes[j - j_bn] * per)
        elif eta_tilde:
            sizes.append(per_level * 2.0 ** (-eta_tilde) * per)
        else:
            sizes.append(group_I * per)
    return AdaptiveLayout(j_bn, j_max, eta_tilde, s_min, group_I, per_level, subgroup_sizes, tuple(sizes))


def case_ii_groups(n: int, m: int, B: float, s: float, L: float) -> int:
    """``eta = floor((L^2 n)^{1/(2+2s)} (log2 n / B)^{(1+2s)/(2+2s)}) ^ m``, at least 1."""
    lg = math.log2(n)
    eta = _floor((L * L * n) ** (1 / (2 + 2 * s)) * (lg / B) ** ((1 + 2 * s) / (2 + 2 * s)))
    return max(1, min(eta, m))


def linfty_groups(n: int, m: int, B: float, s: float) -> int:
    """``eta = floor((n (log2 n)^{2s} / B^{1+2s})^{1/(2+2s)}) ^ m v 1``."""
    lg = math.log2(n)
    eta = _floor((n * lg ** (2 * s) / B ** (1 + 2 * s)) ** (1 / (2 + 2 * s)))
    return max(1, min(eta, m))


def _grouped(m: int, eta: int, ranges: list[tuple[int, int]], prefix: str):
    size = m // eta
    assignments: list[tuple[int, ...]] = [()] * m
    labels = ["discarded"] * m
    for g, (lo, hi) in enumerate(ranges):
        block = tuple(range(lo + 1, hi + 1))
        for i in range(g * size, (g + 1) * size):
            assignments[i] = block
            labels[i] = f"{prefix}{g + 1}"
    return assignments, labels, m - eta * size


def build_schedule(cfg: ProtocolConfig) -> Schedule:
    """Deterministic coefficient assignment for ``cfg.mode``."""
    n, m, B, s = cfg.n, cfg.m, cfg.B, cfg.s
    lg = math.log2(n)
    eta = 1
    discarded = 0
    layout = None
    if cfg.mode == "nonadaptive_i":
        count = _floor(min(n ** (1 / (1 + 2 * s)), B / lg))
        block = tuple(range(1, count + 1))
        assignments = [block] * m
        labels = ["all"] * m
    elif cfg.mode == "nonadaptive_ii":
        b = _floor(B / lg)
        if b < 1:
            raise InfeasibleScheduleError("floor(B / log2 n) = 0: no coefficient fits the budget")
        eta = case_ii_groups(n, m, B, s, cfg.L)
        assignments, labels, discarded = _grouped(m, eta, [(g * b, (g + 1) * b) for g in range(eta)], "g")
    elif cfg.mode == "linfty_combined":
        b = _floor(B / lg)
        if b < 1:
            raise InfeasibleScheduleError("floor(B / log2 n) = 0: no coefficient fits the budget")
        eta = linfty_groups(n, m, B, s)
        cap = _floor((n / lg) ** (1 / (1 + 2 * s)))
        ranges = [(min(g * b, cap), min((g + 1) * b, cap)) for g in range(eta)]
        assignments, labels, discarded = _grouped(m, eta, ranges, "g")
    elif cfg.mode == "adaptive":
        s_min = cfg.s_min
        if s_min is None:
            from ..theory import s_min_feasible

            s_min = s_min_feasible(n, m, B)
            if math.isinf(s_min):
                raise ConfigError("no finite s_min at this (n, m, B); set s_min explicitly")
        layout = adaptive_layout(n, m, B, s_min)
        assignments, labels, discarded = _adaptive_assign(m, layout)
        eta = layout.eta_tilde
    else:  # pragma: no cover - normalize_mode guards this
        raise ConfigError(cfg.mode)

    owners: dict[int, list[int]] = {}
    for i, block in enumerate(assignments):
        for idx in block:
            owners.setdefault(idx, []).append(i)
    F = fractional_digits(n, cfg.D)
    # payload if every coefficient has |x| < 2: sign + one integer digit + F
    nominal = tuple(len(a) * (2 + F) for a in assignments)
    return Schedule(
        mode=cfg.mode,
        n=n,
        m=m,
        assignments=tuple(assignments),
        labels=tuple(labels),
        owners={k: tuple(v) for k, v in sorted(owners.items())},
        eta=eta,
        discarded=discarded,
        layout=layout,
        nominal_payload=nominal,
    )


def _adaptive_assign(m: int, layout: AdaptiveLayout):
    if not layout.feasible:
        short = [t for t, size in enumerate(layout.subgroup_sizes) if size < 1]
        raise InfeasibleScheduleError(
            f"adaptive partition infeasible: level groups t = {short} get no machine "
            f"(eta_tilde = {layout.eta_tilde}, floor(ceil(m/2)/eta_tilde) = {layout.per_level}; "
            f"need roughly m >= 2 * eta_tilde * 2^(eta_tilde - 1) = "
            f"{2 * layout.eta_tilde * 2 ** max(layout.eta_tilde - 1, 0)})"
        )
    j_bn = layout.j_bn
    assignments: list[tuple[int, ...]] = [()] * m
    labels = ["discarded"] * m
    low = tuple(range(1, 1 << j_bn))
    for i in range(layout.group_I):
        assignments[i] = low
        labels[i] = "I"
    used = layout.group_I
    width = 1 << j_bn
    for t, size in enumerate(layout.subgroup_sizes):
        j = j_bn + t
        start = layout.group_I + t * layout.per_level
        for ell in range(1 << t):
            block = tuple((1 << j) + k for k in range(ell * width, (ell + 1) * width))
            for r in range(size):
                i = start + ell * size + r
                assignments[i] = block
                labels[i] = f"I[{t},{ell + 1}]"
                used += 1
    return assignments, labels, m - used
