"""Reference quantities: the delta_n fixed point, regimes, rate curves, j*.

Rates are exact formulas with every unspecified constant set to 1; they are
meant for exponent comparisons, not absolute risk levels.
"""

from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .errors import ConfigError
from .protocols.schedule import adaptive_layout

__all__ = [
    "RegimeReport",
    "Family",
    "parse_family",
    "solve_delta_n",
    "delta_residual",
    "delta_branch",
    "classify_regime",
    "l2_thresholds",
    "linf_thresholds",
    "lower_bound_l2",
    "lower_bound_linf",
    "optimal_level",
    "s_min_feasible",
    "s_min_limit",
    "reference_rows",
    "write_reference_csv",
    "REFERENCE_COLUMNS",
]

REGIMES = ("HighBudget", "Intermediate", "SingleMachine")


# -- delta_n ------------------------------------------------------------------


def _rhs(delta: float, n: int, m: int, budgets: Sequence[float], s: float) -> float:
    lg = math.log2(n)
    first = m / (n * lg)
    root = delta ** (1.0 / (1.0 + 2.0 * s))
    total = math.fsum(min(lg * root * b, 1.0) for b in budgets)
    return min(first, m / (n * total))


def _budgets(m: int, budgets) -> list[float]:
    if isinstance(budgets, (int, float)):
        return [float(budgets)] * m
    budgets = [float(b) for b in budgets]
    if len(budgets) != m:
        raise ValueError(f"need {m} budgets, got {len(budgets)}")
    return budgets


def delta_residual(delta: float, n: int, m: int, budgets, s: float) -> float:
    """Relative residual ``|delta - rhs(delta)| / delta`` of the fixed-point equation."""
    b = _budgets(m, budgets)
    return abs(delta - _rhs(delta, n, m, b, s)) / delta


def solve_delta_n(n: int, m: int, budgets, s: float) -> float:
    """Unique root of ``delta = rhs(delta)`` by bisection on ``[2^-80, 1]``.

    ``budgets`` is either one value shared by all machines or a length-``m``
    sequence.  The left side increases and the right side decreases in
    ``delta``, so the sign of ``delta - rhs`` brackets the root; bisection
    runs until the bracket cannot shrink further in floating point.
    """
    b = _budgets(m, budgets)
    lo, hi = 2.0 ** -80, 1.0
    if lo - _rhs(lo, n, m, b, s) >= 0:
        return lo
    if hi - _rhs(hi, n, m, b, s) <= 0:
        return hi
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if mid - _rhs(mid, n, m, b, s) < 0:
            lo = mid
        else:
            hi = mid
    # both ends are within an ulp; keep the one with the smaller residual
    return min((lo, hi), key=lambda d: abs(d - _rhs(d, n, m, b, s)))


def delta_branch(delta: float, n: int, m: int, budgets, s: float) -> str:
    """Which side of the min is active at ``delta``: ``"first"``, ``"saturated"`` or ``"partial"``.

    ``"saturated"`` means the second fraction is active and every machine's
    term hit the cap 1.
    """
    b = _budgets(m, budgets)
    lg = math.log2(n)
    first = m / (n * lg)
    terms = [lg * delta ** (1.0 / (1.0 + 2.0 * s)) * x for x in b]
    second = m / (n * math.fsum(min(t, 1.0) for t in terms))
    # on a tie (m = log2 n, or B on the low threshold) the closed side wins
    if first < second:
        return "first"
    return "saturated" if all(t >= 1.0 for t in terms) else "partial"


# -- regimes and lower bounds ---------------------------------------------------


def l2_thresholds(n: int, m: int, s: float) -> tuple[float, float]:
    """``(low, high)``: single-machine regime below ``low``, high-budget from ``high`` up."""
    lg = math.log2(n)
    low = (n * lg / m ** (2 + 2 * s)) ** (1 / (1 + 2 * s))
    high = n ** (1 / (1 + 2 * s)) / lg
    return low, high


def linf_thresholds(n: int, m: int, s: float) -> tuple[float, float]:
    lg = math.log2(n)
    low = (n * lg / m ** (2 + 2 * s)) ** (1 / (1 + 2 * s))
    high = (n / lg ** (3 + 4 * s)) ** (1 / (1 + 2 * s))
    return low, high


def _label(B: float, low: float, high: float, m: int, lg: float) -> str:
    # with m < log2 n the intermediate band is empty and the first fraction of
    # the fixed point is always the active one, so every B is single-machine
    if m < lg or B < low:
        return "SingleMachine"
    if B >= high:
        return "HighBudget"
    return "Intermediate"


def lower_bound_l2(n: int, m: int, B: float, s: float, L: float = 1.0, regime: str | None = None) -> float:
    lg = math.log2(n)
    if regime is None:
        regime = _label(B, *l2_thresholds(n, m, s), m, lg)
    scale = L ** (2 / (1 + 2 * s))
    base = n ** (-2 * s / (1 + 2 * s))
    if regime == "HighBudget":
        return scale * base
    if regime == "Intermediate":
        return scale * (n ** (1 / (1 + 2 * s)) / (B * lg)) ** (2 * s / (2 + 2 * s)) * base
    return scale * (n * lg / m) ** (-2 * s / (1 + 2 * s))


def lower_bound_linf(n: int, m: int, B: float, s: float, regime: str | None = None) -> float:
    lg = math.log2(n)
    if regime is None:
        regime = _label(B, *linf_thresholds(n, m, s), m, lg)
    base = (n / lg) ** (-s / (1 + 2 * s))
    if regime == "HighBudget":
        return base
    if regime == "Intermediate":
        ratio = n ** (1 / (1 + 2 * s)) / (B * lg ** ((3 + 4 * s) / (1 + 2 * s)))
        return ratio ** (s / (2 + 2 * s)) * base
    return (n * lg / m) ** (-s / (1 + 2 * s))


@dataclass(frozen=True)
class RegimeReport:
    """Regime label, fixed point and lower-bound rates for one ``(n, m, B, s)``.

    ``regime`` is the L2 label; ``regime_linf`` the sup-norm one.
    ``theorem_conditions`` reports (without enforcing) the finite-n analogue
    of ``log2 n <= m``.
    """

    n: int
    m: int
    B: float
    s: float
    regime: str
    regime_linf: str
    delta_n: float
    lower_bound_rate: float
    lower_bound_rate_linf: float
    l2_low: float
    l2_high: float
    linf_low: float
    linf_high: float
    intermediate_empty: bool
    theorem_conditions: bool

    def to_dict(self) -> dict:
        return asdict(self)


def classify_regime(n: int, m: int, B: float, s: float, L: float = 1.0) -> RegimeReport:
    """Place ``B`` among the lower-bound regimes (boundaries on the closed side as written)."""
    lg = math.log2(n)
    low, high = l2_thresholds(n, m, s)
    ilow, ihigh = linf_thresholds(n, m, s)
    regime = _label(B, low, high, m, lg)
    regime_inf = _label(B, ilow, ihigh, m, lg)
    return RegimeReport(
        n=n,
        m=m,
        B=B,
        s=s,
        regime=regime,
        regime_linf=regime_inf,
        delta_n=solve_delta_n(n, m, B, s),
        lower_bound_rate=lower_bound_l2(n, m, B, s, L, regime),
        lower_bound_rate_linf=lower_bound_linf(n, m, B, s, regime_inf),
        l2_low=low,
        l2_high=high,
        linf_low=ilow,
        linf_high=ihigh,
        intermediate_empty=not low < high,
        theorem_conditions=lg <= m,
    )


# -- s_min ----------------------------------------------------------------------


def _smin_log_lhs(n: int, m: int, s: float) -> float:
    # log2 of the left side; the direct power overflows for large n
    lg = math.log2(n)
    return (lg + 2 * math.log2(lg) - (2 + 2 * s) * math.log2(m)) / (1 + 2 * s)


def s_min_feasible(n: int, m: int, B: float, lo: float = 1e-6, hi: float = 50.0) -> float:
    """Smallest ``s`` with ``(n log2(n)^2 / m^{2+2s})^{1/(1+2s)} <= B`` at this finite ``n``.

    The left side decreases in ``s`` (because ``m < n log2(n)^2``), so the
    admissible set is a half-line and bisection finds its left end.  Returns
    0 when the inequality already holds at ``lo`` and ``inf`` when it fails
    at ``hi``.
    """
    target = math.log2(B)
    if _smin_log_lhs(n, m, lo) <= target:
        return 0.0
    if _smin_log_lhs(n, m, hi) > target:
        return math.inf
    a, b = lo, hi
    for _ in range(200):
        mid = 0.5 * (a + b)
        if mid <= a or mid >= b:
            break
        if _smin_log_lhs(n, m, mid) <= target:
            b = mid
        else:
            a = mid
    return b


_FACTOR = re.compile(
    r"""^(?:
        (?P<num>[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)
      | (?P<sqrt>sqrt\(\s*n\s*\))
      | (?P<log>log2?|ln)\(\s*n\s*\)(?:\s*(?:\^|\*\*)\s*(?P<lp>-?[0-9./]+))?
      | n(?:\s*(?:\^|\*\*)\s*(?P<np>-?[0-9./]+|\(\s*-?[0-9./]+\s*\)))?
    )$""",
    re.VERBOSE,
)


@dataclass(frozen=True)
class Family:
    """A sequence ``c * n^a * log(n)^b`` (log base 2 or e, per ``log_base``)."""

    coef: float
    a: Fraction
    b: Fraction
    log_base: float = 2.0
    text: str = ""

    def __call__(self, n: float) -> float:
        log = math.log(n) / math.log(self.log_base)
        return self.coef * n ** float(self.a) * log ** float(self.b)


def _fraction(text: str) -> Fraction:
    return Fraction(text.strip().strip("()").strip())


def parse_family(expr: str) -> Family:
    """Parse products such as ``sqrt(n)``, ``log2(n)``, ``2*n^0.25*log(n)^2`` or ``16``."""
    coef, a, b = 1.0, Fraction(0), Fraction(0)
    base = 2.0
    text = expr.strip()
    if not text:
        raise ConfigError("empty sequence expression")
    for raw in re.split(r"(?<!\*)\*(?!\*)", text):
        part = raw.strip()
        match = _FACTOR.match(part)
        if not match:
            raise ConfigError(f"cannot parse factor {part!r} in {expr!r}")
        if match.group("num"):
            coef *= float(match.group("num"))
        elif match.group("sqrt"):
            a += Fraction(1, 2)
        elif match.group("log"):
            if match.group("log") != "log2":
                base = math.e
            b += _fraction(match.group("lp")) if match.group("lp") else 1
        else:
            a += _fraction(match.group("np")) if match.group("np") else 1
    return Family(coef, a, b, base, text)


def s_min_limit(m_family: Family | str, B_family: Family | str) -> float:
    """Exact limiting ``s_min`` for power/log-power sequences ``m(n)`` and ``B(n)``.

    With ``m ~ n^a`` and ``B ~ n^a'`` the inequality holds for all large ``n``
    as soon as ``(1 - 2a - 2as)/(1 + 2s) < a'``, i.e. ``s > (1-2a-a')/(2a+2a')``.
    Log factors and constants only matter on that boundary, which leaves the
    infimum unchanged.  With ``a = a' = 0`` the inequality never holds.
    """
    mf = parse_family(m_family) if isinstance(m_family, str) else m_family
    bf = parse_family(B_family) if isinstance(B_family, str) else B_family
    denom = 2 * mf.a + 2 * bf.a
    if denom <= 0:
        return math.inf
    crit = (1 - 2 * mf.a - bf.a) / denom
    return float(max(crit, Fraction(0)))


# -- optimal level -----------------------------------------------------------------


def optimal_level(
    n: int,
    m: int,
    B: float,
    s: float,
    L: float = 1.0,
    norm: str = "l2",
    s_min: float | None = None,
) -> tuple[int, float]:
    """Bias-variance balancing level ``j*`` on the adaptive ``n_j`` ladder.

    ``j*`` is the smallest ``j`` in ``0..j_max`` with ``2^{-2js} L^2 <= 2^j / n_j``
    (L2) or ``2^{-js} L <= sqrt(j 2^j / n_j)`` (sup norm).  ``s_min`` fixes the
    ladder; by default it is the finite-n feasible value, or ``s`` when that
    is infinite.  If no level qualifies ``j_max`` is returned.
    """
    if s_min is None:
        s_min = s_min_feasible(n, m, B)
        if math.isinf(s_min):
            s_min = s
    layout = adaptive_layout(n, m, B, s_min)
    sizes = layout.level_sizes
    for j in range(layout.j_max + 1):
        nj = sizes[j]
        if norm == "l2":
            bias = 2.0 ** (-2 * j * s) * L * L
            thr = 2.0 ** j / nj if nj > 0 else math.inf
        else:
            bias = 2.0 ** (-j * s) * L
            thr = math.sqrt(j * 2.0 ** j / nj) if nj > 0 else math.inf
        if bias <= thr:
            return j, nj
    return layout.j_max, sizes[layout.j_max]


# -- reference curves ----------------------------------------------------------------

REFERENCE_COLUMNS = ("n", "m", "B", "s", "regime", "delta_n", "lb_rate_l2", "lb_rate_linf", "j_star", "s_min")


def reference_rows(
    grid: Iterable[tuple],
    L: float = 1.0,
) -> list[dict]:
    """One row per ``(n, m, B, s)`` or ``(n, m_family, B_family, s)`` entry.

    Family entries (``Family`` objects) are evaluated at ``n`` and their
    ``s_min`` column is the exact limit; numeric entries get the finite-n
    surrogate.
    """
    rows = []
    for n, m_spec, b_spec, s in grid:
        n = int(n)
        if isinstance(m_spec, Family) or isinstance(b_spec, Family):
            mf = m_spec if isinstance(m_spec, Family) else parse_family(repr(float(m_spec)))
            bf = b_spec if isinstance(b_spec, Family) else parse_family(repr(float(b_spec)))
            m = max(1, int(round(mf(n))))
            B = bf(n)
            smin = s_min_limit(mf, bf)
        else:
            m, B = int(m_spec), float(b_spec)
            smin = s_min_feasible(n, m, B)
        rep = classify_regime(n, m, B, s, L)
        j_star, _ = optimal_level(n, m, B, s, L, "l2")
        rows.append(
            {
                "n": n,
                "m": m,
                "B": B,
                "s": s,
                "regime": rep.regime,
                "delta_n": rep.delta_n,
                "lb_rate_l2": rep.lower_bound_rate,
                "lb_rate_linf": rep.lower_bound_rate_linf,
                "j_star": j_star,
                "s_min": smin,
            }
        )
    return rows


def write_reference_csv(rows: Sequence[dict], out) -> str:
    """Write rows (header only when empty); ``out`` is a path or ``None`` for a string."""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=REFERENCE_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    text = buf.getvalue()
    if out is not None:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    return text
