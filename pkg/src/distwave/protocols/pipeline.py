"""Local encoding, central aggregation and the end-to-end protocol run."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from ..bitcodec import BitMessage, BudgetLedger, _encode, fractional_digits, parse_stream, trans_approx_decode
from ..config import ProtocolConfig
from ..errors import MissingMessageError
from ..signals import RegressionSample, generate_data, local_coefficients, make_signal
from ..wavelets import CoeffField, WaveletBasis, level_shift
from .lepski import lepski_select_l2, lepski_select_linfty, nested_estimates
from .schedule import Schedule, build_schedule

__all__ = [
    "LocalTransmission",
    "AggregatedEstimate",
    "ProtocolRun",
    "run_local",
    "aggregate",
    "select_level",
    "run_protocol",
    "replay",
]


@dataclass
class LocalTransmission:
    """Messages one machine sends, plus local bookkeeping that stays local."""

    machine_id: int
    indices: tuple[int, ...]
    messages: list[BitMessage]
    ledger: BudgetLedger
    local_values: np.ndarray = field(repr=False)
    overrun: bool = False

    @property
    def bits(self) -> str:
        return "".join(msg.bits for msg in self.messages)


@dataclass
class AggregatedEstimate:
    """Central-machine output.

    ``coefficients`` holds every aggregated ``f^_jk``; ``field`` is the final
    estimator (equal to ``coefficients`` except in adaptive mode, where it is
    the Lepski-selected truncation).  ``decode_error`` and ``sampling_noise``
    are the W and Z diagnostics and are never transmitted.
    """

    field: CoeffField
    coefficients: CoeffField
    ledgers: list[BudgetLedger]
    jhat: int | None = None
    decode_error: CoeffField | None = None
    sampling_noise: CoeffField | None = None


@dataclass
class ProtocolRun:
    config: ProtocolConfig
    schedule: Schedule
    truth: CoeffField
    estimate: AggregatedEstimate
    transmissions: list[LocalTransmission]

    @property
    def transcript(self) -> dict[int, str]:
        return {t.machine_id: t.bits for t in self.transmissions}


def run_local(
    sample: RegressionSample,
    indices: Sequence[int],
    basis: WaveletBasis,
    n: int,
    D: float,
    budget: float | None = None,
) -> LocalTransmission:
    """Encode this machine's empirical coefficients for ``indices`` in order."""
    F = fractional_digits(n, D)
    values = local_coefficients(sample, basis, indices) if len(indices) else np.zeros(0)
    messages = [_encode(v, F) for v in values]
    ledger = BudgetLedger(sample.machine_id)
    ledger.record_all(messages)
    overrun = budget is not None and ledger.payload_bits > budget
    return LocalTransmission(sample.machine_id, tuple(indices), messages, ledger, values, overrun)


def _decoded_means(schedule: Schedule, messages: Mapping[int, Sequence[BitMessage]]) -> dict[int, float]:
    decoded: dict[int, list[float]] = {}
    for i, block in enumerate(schedule.assignments):
        if not block:
            continue
        got = messages.get(i)
        if got is None or len(got) < len(block):
            have = 0 if got is None else len(got)
            raise MissingMessageError(f"machine {i} sent {have} of {len(block)} scheduled messages")
        for idx, msg in zip(block, got):
            decoded.setdefault(idx, []).append(trans_approx_decode(msg))
    means = {}
    for idx in schedule.owners:
        vals = decoded.get(idx)
        if not vals:
            raise MissingMessageError(f"no message for coefficient index {idx}")
        means[idx] = math.fsum(vals) / len(vals)
    return means


def _field_from(values: Mapping[int, float], max_level: int) -> CoeffField:
    arr = np.zeros((1 << (max_level + 1)) - 1)
    for idx, v in values.items():
        arr[idx - 1] = v
    return CoeffField(max_level, arr)


def aggregate(
    schedule: Schedule,
    messages: Mapping[int, Sequence[BitMessage]],
    ledgers: Sequence[BudgetLedger] | None = None,
) -> AggregatedEstimate:
    """Average the decoded messages of every coefficient over its owners.

    ``messages`` maps machine id to that machine's messages in schedule order.
    """
    means = _decoded_means(schedule, messages)
    coeffs = _field_from(means, schedule.max_level)
    if ledgers is None:
        ledgers = []
        for i in range(schedule.m):
            led = BudgetLedger(i)
            led.record_all(messages.get(i, ()))
            ledgers.append(led)
    return AggregatedEstimate(field=coeffs, coefficients=coeffs, ledgers=list(ledgers))


def select_level(
    coeffs: CoeffField, schedule: Schedule, cfg: ProtocolConfig
) -> tuple[int, CoeffField]:
    """Run the Lepski rule on the nested truncations and return ``(jhat, f~(jhat))``."""
    layout = schedule.layout
    j_max = layout.j_max
    estimates = nested_estimates(coeffs.padded(max(j_max - 1, coeffs.max_level)), j_max)
    if cfg.norm == "l2":
        jhat = lepski_select_l2(estimates, cfg.tau, layout.level_sizes)
    else:
        jhat = lepski_select_linfty(estimates, cfg.tau, layout.level_sizes, cfg.basis())
    return jhat, estimates[jhat]


def run_protocol(
    cfg: ProtocolConfig,
    map_fn: Callable[[Callable, Iterable], Iterable] | None = None,
) -> ProtocolRun:
    """Data generation, local encoding, aggregation and (adaptive) level selection.

    ``map_fn`` lets a caller run the local phase on a pool; any ordered map
    gives the same result because every machine has its own RNG stream.
    """
    basis = cfg.basis()
    truth = make_signal(cfg.signal_spec())
    schedule = build_schedule(cfg)

    def local(i: int) -> LocalTransmission:
        (sample,) = generate_data(truth, basis, cfg.n, cfg.m, cfg.sigma, cfg.seed, machines=[i])
        return run_local(sample, schedule.indices(i), basis, cfg.n, cfg.D, budget=cfg.B)

    active = schedule.active_machines()
    transmissions = list((map_fn or map)(local, active))
    by_machine = {t.machine_id: t for t in transmissions}
    ledgers = [by_machine[i].ledger if i in by_machine else BudgetLedger(i) for i in range(cfg.m)]
    est = aggregate(schedule, {t.machine_id: t.messages for t in transmissions}, ledgers)

    # W and Z diagnostics, from the local values the machines kept
    local_means: dict[int, float] = {}
    for idx, owners in schedule.owners.items():
        vals = [by_machine[i].local_values[by_machine[i].indices.index(idx)] for i in owners]
        local_means[idx] = math.fsum(vals) / len(vals)
    top = schedule.max_level
    local_field = _field_from(local_means, top)
    est.decode_error = est.coefficients - local_field
    truth_part = _field_from({idx: truth[level_shift(idx)] for idx in schedule.owners}, top)
    est.sampling_noise = local_field - truth_part

    if cfg.mode == "adaptive":
        est.jhat, est.field = select_level(est.coefficients, schedule, cfg)
    return ProtocolRun(cfg, schedule, truth, est, transmissions)


def replay(cfg: ProtocolConfig, bitstreams: Mapping[int, str]) -> AggregatedEstimate:
    """Rebuild the central estimate from serialized per-machine bit strings only."""
    schedule = build_schedule(cfg)
    F = fractional_digits(cfg.n, cfg.D)
    messages = {
        i: parse_stream(bits, F, expected=len(schedule.indices(i)))
        for i, bits in bitstreams.items()
    }
    est = aggregate(schedule, messages)
    if cfg.mode == "adaptive":
        est.jhat, est.field = select_level(est.coefficients, schedule, cfg)
    return est
