"""Periodized orthonormal wavelets on [0, 1] and coefficient-domain utilities.

Two families are available:

* Haar, evaluated exactly as a step function.
* Daubechies with ``N`` vanishing moments, tabulated once on a dyadic grid by
  the cascade (dyadic refinement) recursion and evaluated by linear
  interpolation between grid points.

All functions ``psi_jk(t) = 2^{j/2} psi(2^j t - k)`` are periodized, so for
every level ``j >= 0`` the shifts ``k = 0..2^j-1`` give an orthonormal
family.  The mother wavelet is supported on ``[0, 2N-1]``.

Coefficients live in a :class:`CoeffField`, a flat array ordered by the heap
index ``2^j + k`` (entry ``idx - 1`` holds ``f_jk``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from math import comb

import numpy as np

from .errors import LevelTooDeepError

__all__ = [
    "CoeffField",
    "WaveletBasis",
    "daubechies_filter",
    "make_basis",
    "eval_psi",
    "synthesize",
    "besov_sobolev_norm",
    "besov_holder_norm",
    "heap_index",
    "level_shift",
]


def heap_index(j: int, k: int) -> int:
    """Return the 1-based position ``2^j + k`` of coefficient (j, k)."""
    return (1 << j) + k


def level_shift(idx: int) -> tuple[int, int]:
    """Invert :func:`heap_index`."""
    if idx < 1:
        raise ValueError(f"heap index must be >= 1, got {idx}")
    j = idx.bit_length() - 1
    return j, idx - (1 << j)


@dataclass(frozen=True)
class CoeffField:
    """Triangular array ``f_jk`` for ``0 <= j <= max_level``, ``0 <= k < 2^j``.

    ``values`` holds exactly ``2^{J+1} - 1`` entries in heap order and is
    made read-only on construction.
    """

    max_level: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.max_level < 0:
            raise ValueError("max_level must be >= 0")
        arr = np.array(self.values, dtype=float, copy=True).reshape(-1)
        expected = (1 << (self.max_level + 1)) - 1
        if arr.size != expected:
            raise ValueError(
                f"level {self.max_level} needs {expected} coefficients, got {arr.size}"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @classmethod
    def zeros(cls, max_level: int) -> CoeffField:
        return cls(max_level, np.zeros((1 << (max_level + 1)) - 1))

    @classmethod
    def from_levels(cls, levels) -> CoeffField:
        """Build from a sequence whose j-th item has ``2^j`` entries."""
        levels = [np.asarray(lv, dtype=float).reshape(-1) for lv in levels]
        for j, lv in enumerate(levels):
            if lv.size != 1 << j:
                raise ValueError(f"level {j} must have {1 << j} entries, got {lv.size}")
        return cls(len(levels) - 1, np.concatenate(levels))

    @classmethod
    def from_dict(cls, coeffs: dict[tuple[int, int], float], max_level: int | None = None) -> CoeffField:
        """Build from a sparse ``{(j, k): value}`` mapping; missing entries are zero."""
        if max_level is None:
            max_level = max((j for j, _ in coeffs), default=0)
        arr = np.zeros((1 << (max_level + 1)) - 1)
        for (j, k), v in coeffs.items():
            if not 0 <= k < (1 << j) or j > max_level:
                raise IndexError(f"coefficient ({j}, {k}) outside level range 0..{max_level}")
            arr[heap_index(j, k) - 1] = v
        return cls(max_level, arr)

    @property
    def size(self) -> int:
        return self.values.size

    def level(self, j: int) -> np.ndarray:
        if not 0 <= j <= self.max_level:
            raise IndexError(f"level {j} outside 0..{self.max_level}")
        return self.values[(1 << j) - 1:(1 << (j + 1)) - 1]

    def __getitem__(self, jk: tuple[int, int]) -> float:
        j, k = jk
        if j > self.max_level:
            return 0.0
        if not 0 <= k < (1 << j):
            raise IndexError(f"shift {k} outside 0..{(1 << j) - 1}")
        return float(self.values[heap_index(j, k) - 1])

    def padded(self, max_level: int) -> CoeffField:
        """Return a copy truncated or zero-padded to ``max_level``."""
        n_new = (1 << (max_level + 1)) - 1
        arr = np.zeros(n_new)
        keep = min(n_new, self.size)
        arr[:keep] = self.values[:keep]
        return CoeffField(max_level, arr)

    def truncated(self, levels_below: int) -> CoeffField:
        """Keep levels ``< levels_below``; the rest become zero (shape unchanged)."""
        arr = self.values.copy()
        arr[max(0, (1 << levels_below) - 1):] = 0.0
        return CoeffField(self.max_level, arr)

    def level_energies(self) -> np.ndarray:
        """``sum_k f_jk^2`` for every level ``j``."""
        return np.array([float(np.dot(lv, lv)) for lv in (self.level(j) for j in range(self.max_level + 1))])

    def squared_norm(self) -> float:
        """``||f||_2^2`` by Parseval."""
        return float(np.dot(self.values, self.values))

    def __sub__(self, other: CoeffField) -> CoeffField:
        top = max(self.max_level, other.max_level)
        return CoeffField(top, self.padded(top).values - other.padded(top).values)

    def __add__(self, other: CoeffField) -> CoeffField:
        top = max(self.max_level, other.max_level)
        return CoeffField(top, self.padded(top).values + other.padded(top).values)


def daubechies_filter(n_moments: int) -> np.ndarray:
    """Extremal-phase Daubechies lowpass filter with ``n_moments`` vanishing moments.

    Obtained by spectral factorization of the Daubechies polynomial, keeping
    the roots inside the unit circle.  Normalized so the taps sum to sqrt(2).
    """
    if n_moments < 1:
        raise ValueError("need at least one vanishing moment")
    if n_moments == 1:
        return np.array([1.0, 1.0]) / np.sqrt(2.0)
    coeffs = [comb(n_moments - 1 + k, k) for k in range(n_moments)]
    poly = np.array([1.0 + 0j])
    for y in np.roots(coeffs[::-1]):
        # y = (2 - z - 1/z) / 4  <=>  z^2 - (2 - 4y) z + 1 = 0
        zs = np.roots([1.0, -(2.0 - 4.0 * y), 1.0])
        poly = np.convolve(poly, [1.0, -zs[np.argmin(np.abs(zs))]])
    for _ in range(n_moments):
        poly = np.convolve(poly, [1.0, 1.0])
    h = np.real(poly)
    return h * np.sqrt(2.0) / h.sum()


def _cascade(h: np.ndarray, depth: int) -> tuple[np.ndarray, np.ndarray]:
    """Tabulate phi and psi on ``[0, 2N-1]`` with step ``2^-depth``.

    Integer values of phi come from the eigenvector of the two-scale matrix;
    each refinement fills in the next dyadic level exactly.
    """
    length = h.size - 1  # support [0, 2N-1]
    sqrt2 = np.sqrt(2.0)
    # phi(i) = sqrt2 * sum_l h[2i - l] phi(l) for interior integers
    inner = np.arange(1, length)
    mat = np.zeros((inner.size, inner.size))
    for a, i in enumerate(inner):
        for b, l in enumerate(inner):
            if 0 <= 2 * i - l < h.size:
                mat[a, b] = sqrt2 * h[2 * i - l]
    w, v = np.linalg.eig(mat)
    vec = np.real(v[:, np.argmin(np.abs(w - 1.0))])
    vec /= vec.sum()
    phi = np.zeros(length + 1)
    phi[1:length] = vec

    def refine(prev: np.ndarray, r: int) -> np.ndarray:
        # prev: values at resolution 2^(r-1); returns values at 2^r
        size = length * (1 << r) + 1
        out = np.zeros(size)
        i = np.arange(size)
        step = 1 << (r - 1)
        for k, hk in enumerate(h):
            src = i - k * step
            ok = (src >= 0) & (src < prev.size)
            out[ok] += sqrt2 * hk * prev[src[ok]]
        return out

    tables = [phi]
    for r in range(1, depth):
        tables.append(refine(tables[-1], r))
    phi_coarse = tables[-1]  # resolution 2^(depth-1)
    g = np.array([(-1) ** k * h[h.size - 1 - k] for k in range(h.size)])
    size = length * (1 << depth) + 1
    psi = np.zeros(size)
    i = np.arange(size)
    step = 1 << (depth - 1)
    for k, gk in enumerate(g):
        src = i - k * step
        ok = (src >= 0) & (src < phi_coarse.size)
        psi[ok] += sqrt2 * gk * phi_coarse[src[ok]]
    phi_fine = refine(phi_coarse, depth) if depth >= 1 else phi_coarse
    return phi_fine, psi


@dataclass(frozen=True)
class WaveletBasis:
    """Periodized wavelet family on [0, 1].

    Parameters
    ----------
    family : {"haar", "daubechies"}
    n_moments : int
        Vanishing moments ``N``; Haar is ``N = 1``.
    refinement_depth : int
        ``R``; the Daubechies tables have ``2^R`` points per unit.
    """

    family: str = "haar"
    n_moments: int = 1
    refinement_depth: int = 12

    def __post_init__(self):
        if self.family not in ("haar", "daubechies"):
            raise ValueError(f"unknown wavelet family {self.family!r}")
        if self.family == "haar" and self.n_moments != 1:
            raise ValueError("Haar has exactly one vanishing moment")
        if self.n_moments < 1:
            raise ValueError("n_moments must be >= 1")
        if self.refinement_depth < 4:
            raise ValueError("refinement_depth must be >= 4")

    @property
    def name(self) -> str:
        return "haar" if self.family == "haar" else f"db{self.n_moments}"

    @property
    def s_max(self) -> float:
        """Upper smoothness limit ``s < N`` for the Besov characterization."""
        return float(self.n_moments)

    @property
    def support_length(self) -> int:
        return 2 * self.n_moments - 1

    @property
    def max_level(self) -> int:
        """Deepest level eval_psi accepts."""
        return 60 if self.family == "haar" else self.refinement_depth - 2

    @property
    def default_truth_level(self) -> int:
        return 16 if self.family == "haar" else self.refinement_depth - 4

    @cached_property
    def filter(self) -> np.ndarray:
        return daubechies_filter(self.n_moments)

    @cached_property
    def _tables(self) -> tuple[np.ndarray, np.ndarray]:
        phi, psi = _cascade(self.filter, self.refinement_depth)
        phi.setflags(write=False)
        psi.setflags(write=False)
        return phi, psi

    @property
    def psi_table(self) -> np.ndarray:
        """Mother wavelet on ``[0, 2N-1]`` at step ``2^-R`` (Daubechies only)."""
        return self._tables[1]

    @property
    def phi_table(self) -> np.ndarray:
        return self._tables[0]

    def mother(self, x) -> np.ndarray:
        """Unscaled, non-periodized mother wavelet psi(x)."""
        x = np.asarray(x, dtype=float)
        if self.family == "haar":
            return np.where((x >= 0) & (x < 0.5), 1.0, np.where((x >= 0.5) & (x < 1.0), -1.0, 0.0))
        tab = self.psi_table
        pos = x * (1 << self.refinement_depth)
        inside = (pos >= 0) & (pos < tab.size - 1)
        pos = np.where(inside, pos, 0.0)
        i0 = np.floor(pos).astype(np.int64)
        w = pos - i0
        return np.where(inside, tab[i0] * (1.0 - w) + tab[np.minimum(i0 + 1, tab.size - 1)] * w, 0.0)

    def check_level(self, j: int) -> None:
        if j < 0:
            raise ValueError(f"level must be >= 0, got {j}")
        if j > self.max_level:
            raise LevelTooDeepError(
                f"level {j} exceeds refinement depth {self.refinement_depth} - 2 for {self.name}"
            )

    def level_terms(self, j: int, t) -> tuple[np.ndarray, np.ndarray]:
        """Nonzero periodized terms of level ``j`` at points ``t``.

        Returns ``(shifts, values)`` of shape ``(len(t), S)`` with ``S`` the
        support length.  A point may list the same shift more than once when
        ``2^j < S``; summing the duplicates gives the periodized value.
        """
        self.check_level(j)
        t = np.mod(np.asarray(t, dtype=float).reshape(-1), 1.0)
        scale = float(1 << j)
        u = t * scale
        base = np.floor(u)
        amp = np.sqrt(scale)
        if self.family == "haar":
            frac = u - base
            vals = np.where(frac < 0.5, amp, -amp)
            return (base.astype(np.int64) % (1 << j))[:, None], vals[:, None]
        q = np.arange(self.support_length)
        r = base[:, None] - q[None, :]
        vals = amp * self.mother(u[:, None] - r)
        return r.astype(np.int64) % (1 << j), vals

    def evaluate(self, field_: CoeffField, t) -> np.ndarray:
        """Pointwise values of ``sum f_jk psi_jk`` at ``t``."""
        t = np.asarray(t, dtype=float).reshape(-1)
        if self.family == "haar":
            cells = _haar_cells(field_)
            idx = np.floor(np.mod(t, 1.0) * cells.size).astype(np.int64)
            return cells[np.minimum(idx, cells.size - 1)]
        out = np.zeros(t.size)
        for j in range(field_.max_level + 1):
            coeffs = field_.level(j)
            if not np.any(coeffs):
                continue
            ks, vals = self.level_terms(j, t)
            out += np.sum(coeffs[ks] * vals, axis=1)
        return out


def _haar_cells(field_: CoeffField) -> np.ndarray:
    """Exact values of a Haar expansion on its ``2^{J+1}`` constant cells."""
    top = field_.max_level
    cells = np.zeros(1 << (top + 1))
    for j in range(top + 1):
        c = field_.level(j) * np.sqrt(float(1 << j))
        if not np.any(c):
            continue
        cells += np.repeat(np.stack([c, -c], axis=1).reshape(-1), 1 << (top - j))
    return cells


def make_basis(family: str, refinement_depth: int = 12) -> WaveletBasis:
    """Parse ``"haar"`` or ``"dbN"`` (``"db1"`` is Haar)."""
    name = family.strip().lower()
    if name in ("haar", "db1"):
        return WaveletBasis("haar", 1, refinement_depth)
    if name.startswith("db") and name[2:].isdigit():
        return WaveletBasis("daubechies", int(name[2:]), refinement_depth)
    if name.startswith("daubechies") and name[10:].strip("-").isdigit():
        return WaveletBasis("daubechies", int(name[10:].strip("-")), refinement_depth)
    raise ValueError(f"unknown wavelet family {family!r}")


def eval_psi(basis: WaveletBasis, j: int, k: int, t):
    """``2^{j/2} psi(2^j t - k)``, periodized; scalar in, scalar out."""
    if not 0 <= k < (1 << j):
        raise IndexError(f"shift {k} outside 0..{(1 << j) - 1}")
    scalar = np.ndim(t) == 0
    ks, vals = basis.level_terms(j, t)
    out = np.sum(np.where(ks == k, vals, 0.0), axis=1)
    return float(out[0]) if scalar else out


def synthesize(basis: WaveletBasis, field_: CoeffField, grid_size: int) -> np.ndarray:
    """Values of the expansion at the midpoints ``(i + 1/2) / grid_size``."""
    if grid_size < 1 or grid_size & (grid_size - 1):
        raise ValueError(f"grid_size must be a power of two, got {grid_size}")
    if grid_size < 1 << (field_.max_level + 1):
        raise ValueError(f"grid_size {grid_size} too coarse for level {field_.max_level}")
    if basis.family == "haar":
        cells = _haar_cells(field_)
        return np.repeat(cells, grid_size // cells.size)
    t = (np.arange(grid_size) + 0.5) / grid_size
    return basis.evaluate(field_, t)


def besov_sobolev_norm(field_: CoeffField, s: float) -> float:
    """``sup_j 2^{js} (sum_k f_jk^2)^{1/2}`` over the stored levels."""
    if s <= 0:
        raise ValueError("smoothness must be positive")
    energies = field_.level_energies()
    j = np.arange(energies.size)
    return float(np.max(2.0 ** (j * s) * np.sqrt(energies)))


def besov_holder_norm(field_: CoeffField, s: float) -> float:
    """``sup_{j,k} 2^{j(s+1/2)} |f_jk|`` over the stored coefficients."""
    if s <= 0:
        raise ValueError("smoothness must be positive")
    j = np.floor(np.log2(np.arange(1, field_.size + 1))).astype(float)
    return float(np.max(2.0 ** (j * (s + 0.5)) * np.abs(field_.values)))
