"""Ground-truth signals in Besov balls and the distributed regression sampler.

Each machine ``i`` draws ``n/m`` pairs ``(T, X)`` with ``T ~ U(0, 1)`` and
``X = f0(T) + sigma * eps``.  Machine streams are independent children of
the run seed, so shards do not depend on how many machines exist or on the
order in which they are generated.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, NormViolationError
from .wavelets import CoeffField, WaveletBasis, besov_holder_norm, besov_sobolev_norm

__all__ = [
    "SignalSpec",
    "RegressionSample",
    "make_signal",
    "machine_rng",
    "generate_data",
    "empirical_coefficient",
    "local_coefficients",
    "dump_samples",
]

SIGNAL_KINDS = ("worst_case", "random_sign", "zero", "custom")


@dataclass(frozen=True)
class SignalSpec:
    """Recipe for a truth field.

    ``norm`` selects the ball the radius refers to: ``"l2"`` for the
    Sobolev-type B^s_{2,inf}, ``"linf"`` for the Hoelder-type B^s_{inf,inf}.
    """

    kind: str = "worst_case"
    s: float = 1.0
    L: float = 1.0
    truth_level: int = 16
    seed: int = 0
    norm: str = "l2"
    coeffs: CoeffField | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in SIGNAL_KINDS:
            raise ConfigError(f"unknown signal kind {self.kind!r}; expected one of {SIGNAL_KINDS}")
        if self.s <= 0 or self.L < 0:
            raise ConfigError("signal needs s > 0 and L >= 0")
        if not 0 <= self.truth_level <= 24:
            raise ConfigError("truth_level must lie in 0..24")
        if self.norm not in ("l2", "linf"):
            raise ConfigError(f"norm must be 'l2' or 'linf', got {self.norm!r}")


@dataclass
class RegressionSample:
    """One machine's shard. ``machine_id`` is 0-based."""

    machine_id: int
    designs: np.ndarray
    responses: np.ndarray

    def __len__(self) -> int:
        return self.designs.size


def _ball_norm(field_: CoeffField, s: float, norm: str) -> float:
    return besov_sobolev_norm(field_, s) if norm == "l2" else besov_holder_norm(field_, s)


def make_signal(spec: SignalSpec) -> CoeffField:
    """Realize the truth coefficients described by ``spec``.

    The worst-case profile ``f_jk = L 2^{-j(s+1/2)}`` has both Besov norms
    equal to ``L``: every full level has Sobolev weight ``L^2`` and every
    coefficient has Hoelder weight ``L``.
    """
    top = spec.truth_level
    if spec.kind == "zero":
        return CoeffField.zeros(top)
    if spec.kind == "custom":
        if spec.coeffs is None:
            raise ConfigError("custom signal needs coeffs")
        # tolerance covers float rounding of fields built exactly at the radius
        if _ball_norm(spec.coeffs, spec.s, spec.norm) > spec.L * (1 + 1e-12):
            raise NormViolationError(
                f"custom field has {spec.norm} Besov norm "
                f"{_ball_norm(spec.coeffs, spec.s, spec.norm):.6g} > L = {spec.L}"
            )
        return spec.coeffs
    levels = [np.full(1 << j, spec.L * 2.0 ** (-j * (spec.s + 0.5))) for j in range(top + 1)]
    if spec.kind == "random_sign":
        rng = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(0x5167,)))
        levels = [lv * rng.choice([-1.0, 1.0], size=lv.size) for lv in levels]
    return CoeffField.from_levels(levels)


def machine_rng(seed: int, machine: int) -> np.random.Generator:
    """Independent stream for ``machine`` under run ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(machine,)))


def generate_data(
    field_: CoeffField,
    basis: WaveletBasis,
    n: int,
    m: int,
    sigma: float = 1.0,
    seed: int = 0,
    machines: Sequence[int] | None = None,
) -> list[RegressionSample]:
    """Draw the shards of the distributed regression model.

    ``machines`` restricts generation to a subset of ids; each shard is the
    same whether generated alone or with the others.
    """
    if n < 1 or m < 1:
        raise ConfigError("n and m must be positive")
    if n % m:
        raise ConfigError(f"m = {m} does not divide n = {n}; n/m must be an integer")
    if sigma < 0:
        raise ConfigError("sigma must be >= 0")
    per = n // m
    out = []
    for i in range(m) if machines is None else machines:
        rng = machine_rng(seed, i)
        t = rng.random(per)
        eps = rng.standard_normal(per)
        x = basis.evaluate(field_, t) + sigma * eps
        out.append(RegressionSample(i, t, x))
    return out


def empirical_coefficient(sample: RegressionSample, basis: WaveletBasis, j: int, k: int) -> float:
    """Local unbiased estimate ``(m/n) sum_l X_l psi_jk(T_l)``."""
    if len(sample) == 0:
        raise ValueError("empty sample")
    ks, vals = basis.level_terms(j, sample.designs)
    psi = np.sum(np.where(ks == k, vals, 0.0), axis=1)
    return float(np.dot(sample.responses, psi) / len(sample))


def local_coefficients(
    sample: RegressionSample, basis: WaveletBasis, indices: Sequence[int]
) -> np.ndarray:
    """Empirical coefficients for heap indices ``indices``, computed level by level."""
    indices = np.asarray(indices, dtype=np.int64)
    out = np.zeros(indices.size)
    if indices.size == 0:
        return out
    if len(sample) == 0:
        raise ValueError("empty sample")
    levels = np.floor(np.log2(indices)).astype(np.int64)
    for j in np.unique(levels):
        j = int(j)
        ks, vals = basis.level_terms(j, sample.designs)
        weights = vals * sample.responses[:, None]
        full = np.bincount(ks.reshape(-1), weights=weights.reshape(-1), minlength=1 << j)
        sel = levels == j
        out[sel] = full[indices[sel] - (1 << j)] / len(sample)
    return out


def dump_samples(samples: Sequence[RegressionSample], path) -> None:
    """Write ``machine_id l T X`` rows with 17 significant digits."""
    with open(path, "w") as fh:
        fh.write("machine_id\tl\tT\tX\n")
        for smp in samples:
            for ell, (t, x) in enumerate(zip(smp.designs, smp.responses)):
                fh.write(f"{smp.machine_id}\t{ell}\t{t:.17g}\t{x:.17g}\n")
