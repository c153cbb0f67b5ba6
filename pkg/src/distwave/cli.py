"""Command-line entry point: ``distwave {run,sweep,theory,calibrate-tau,audit}``.

Exit codes: 0 success, 2 invalid configuration, 3 infeasible schedule or
corrupt transcript, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

from . import harness, theory
from .bitcodec import BudgetLedger, expected_length_audit, fractional_digits, parse_stream
from .config import ProtocolConfig, config_from_section, load_ini, parse_number
from .errors import ConfigError, FramingError, InfeasibleScheduleError, MissingMessageError
from .protocols import build_schedule, read_transcript, replay, run_protocol, write_transcript

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_IO = 4

SUBCOMMANDS = ("run", "sweep", "theory", "calibrate-tau", "audit")


@dataclass(frozen=True)
class RunManifest:
    subcommand: str
    config: Path | None
    out: Path
    seed: int | None
    threads: int
    fmt: str
    transcript: Path | None = None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="distwave", description=__doc__.splitlines()[0])
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", type=Path, help="INI file with a [protocol] section")
    parser.add_argument("--out", type=Path, default=Path("."), help="output directory (default: cwd)")
    parser.add_argument("--seed", type=int, help="master seed, overrides the config")
    parser.add_argument("--threads", type=int, default=1, help="worker threads for local phases/replicates")
    parser.add_argument("--format", dest="fmt", choices=("csv", "json"), default="json")
    parser.add_argument("--transcript", type=Path, help="transcript file for 'audit'")
    return parser


@contextmanager
def _pool(threads: int):
    if threads <= 1:
        yield map
        return
    with ThreadPoolExecutor(max_workers=threads) as ex:
        yield ex.map


def _protocol_config(ini, manifest: RunManifest) -> ProtocolConfig:
    if not ini.has_section("protocol"):
        raise ConfigError("config file has no [protocol] section")
    overrides = {} if manifest.seed is None else {"seed": str(manifest.seed)}
    return config_from_section(ini["protocol"], overrides)


def _load(manifest: RunManifest):
    if manifest.config is None:
        raise ConfigError(f"{manifest.subcommand} needs --config")
    if not manifest.config.is_file():
        raise OSError(f"cannot read config {manifest.config}")
    return load_ini(manifest.config)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, default=harness._json_default) + "\n"


# -- subcommands -------------------------------------------------------------------


def cmd_run(manifest: RunManifest) -> int:
    ini = _load(manifest)
    cfg = _protocol_config(ini, manifest)
    with _pool(manifest.threads) as map_fn:
        run = run_protocol(cfg, map_fn=map_fn)
    est = run.estimate
    risk2 = harness.risk_l2(est.field, run.truth)
    riskinf = harness.risk_linf(est.field, run.truth, cfg.basis())
    audit = expected_length_audit(est.ledgers, cfg.n, cfg.D)
    report = {
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "risk_l2": risk2,
        "risk_linf": riskinf,
        "jhat": est.jhat,
        "discarded_machines": run.schedule.discarded,
        "payload_bits": [led.payload_bits for led in est.ledgers],
        "framing_bits": [led.framing_bits for led in est.ledgers],
        "total_payload_bits": audit.total_payload_bits,
        "total_framing_bits": audit.total_framing_bits,
        "messages": audit.messages,
        "max_payload_bits": max(audit.per_machine_payload, default=0),
        "budget_overrun": any(t.overrun for t in run.transmissions),
    }
    manifest.out.mkdir(parents=True, exist_ok=True)
    transcript = manifest.out / "transcript.txt"
    write_transcript(transcript, cfg, run.transcript)
    if manifest.fmt == "json":
        _write(manifest.out / "report.json", _dump_json(report))
    else:
        keys = ["n", "m", "B", "s", "mode", "risk_l2", "risk_linf", "jhat", "max_payload_bits", "total_payload_bits"]
        row = {**{k: report["config"][k] for k in keys[:5]}, **{k: report[k] for k in keys[5:]}}
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
        writer.writeheader()
        writer.writerow(row)
        _write(manifest.out / "report.csv", buf.getvalue())
    print(
        f"mode={cfg.mode} n={cfg.n} m={cfg.m} B={cfg.B:g}  risk_l2={risk2:.6g} risk_linf={riskinf:.6g}"
        + (f" jhat={est.jhat}" if est.jhat is not None else "")
        + f"  payload={audit.total_payload_bits} framing={audit.total_framing_bits}"
        f" max_machine_payload={report['max_payload_bits']}"
    )
    print(f"transcript: {transcript}")
    return EXIT_OK


def _sweep_values(axis: str, raw: str) -> list:
    values = [v.strip() for v in raw.split(",") if v.strip()]
    if axis in ("n", "m", "seed", "truth_level"):
        out = []
        for v in values:
            x = parse_number(v)
            if not float(x).is_integer():
                raise ConfigError(f"{axis} values must be integers, got {v!r}")
            out.append(int(x))
        return out
    if axis in ("B", "s", "D", "L", "tau", "sigma", "s_min"):
        return [float(parse_number(v)) for v in values]
    return values


def cmd_sweep(manifest: RunManifest) -> int:
    ini = _load(manifest)
    cfg = _protocol_config(ini, manifest)
    if not ini.has_section("sweep"):
        raise ConfigError("sweep needs a [sweep] section with axis, values, replicates")
    sec = ini["sweep"]
    axis = sec.get("axis", "n").strip()
    values = _sweep_values(axis, sec.get("values", ""))
    replicates = int(parse_number(sec.get("replicates", "10")))
    linf = sec.getboolean("linf", fallback=True)
    with _pool(manifest.threads) as map_fn:
        report = harness.run_sweep(cfg, axis, values, replicates, map_fn=map_fn, linf=linf)
    if manifest.fmt == "json":
        path = manifest.out / "sweep.json"
        _write(path, report.to_json())
    else:
        path = manifest.out / "sweep.csv"
        _write(path, report.to_csv())
    for cell in report.cells:
        value = report.values[cell.index]
        if cell.ok:
            print(f"{axis}={value}  mean_risk_l2={cell.mean_risk_l2:.6g} se={cell.se_risk_l2:.3g}"
                  f" max_payload={cell.max_payload_bits}")
        else:
            print(f"{axis}={value}  error {cell.error['type']}: {cell.error['message']}")
    slopes = report.to_dict()["slopes"]
    if "mean_risk_l2" in slopes and "slope" in slopes["mean_risk_l2"]:
        fit = slopes["mean_risk_l2"]
        print(f"slope(l2) = {fit['slope']:.4f} +/- {fit['half_width']:.4f}")
    print(f"report: {path}")
    return EXIT_OK


def _grid_entries(raw: str, family_ok: bool):
    out = []
    for v in (x.strip() for x in raw.split(",")):
        if not v:
            continue
        try:
            out.append(parse_number(v))
        except ConfigError:
            if not family_ok:
                raise
            out.append(theory.parse_family(v))
    return out


def cmd_theory(manifest: RunManifest) -> int:
    ini = _load(manifest)
    if not ini.has_section("theory"):
        raise ConfigError("theory needs a [theory] section with n, m, B, s lists")
    sec = ini["theory"]
    ns = [int(x) for x in _grid_entries(sec.get("n", ""), False)]
    ms = _grid_entries(sec.get("m", ""), True)
    bs = _grid_entries(sec.get("B", ""), True)
    ss = [float(x) for x in _grid_entries(sec.get("s", ""), False)]
    L = float(parse_number(sec.get("L", "1")))
    rows = theory.reference_rows(itertools.product(ns, ms, bs, ss), L=L)
    if manifest.fmt == "json":
        path = manifest.out / "theory.json"
        _write(path, _dump_json(rows))
    else:
        path = manifest.out / "theory.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        theory.write_reference_csv(rows, path)
    print(f"{len(rows)} reference rows -> {path}")
    return EXIT_OK


def cmd_calibrate_tau(manifest: RunManifest) -> int:
    ini = _load(manifest)
    cfg = _protocol_config(ini, manifest)
    sec = ini["calibrate"] if ini.has_section("calibrate") else {}
    replicates = int(parse_number(sec.get("replicates", "100")))
    rate = float(parse_number(sec.get("rate", "0.95")))
    build_schedule(cfg.replace(mode="adaptive"))  # fail early on an infeasible partition
    with _pool(manifest.threads) as map_fn:
        cal = harness.calibrate_tau(cfg, replicates, rate, map_fn=map_fn)
    out = {"config": cfg.to_dict(), **cal.to_dict()}
    if manifest.fmt == "json":
        path = manifest.out / "calibrate_tau.json"
        _write(path, _dump_json(out))
    else:
        path = manifest.out / "calibrate_tau.csv"
        _write(path, f"tau,target_rate,achieved_rate,replicates\n{cal.tau!r},{rate!r},"
                     f"{cal.zero_rate(cal.tau)!r},{replicates}\n")
    print(f"tau = {cal.tau:.6g} (jhat = 0 in {cal.zero_rate(cal.tau):.0%} of {replicates} replicates)")
    return EXIT_OK


def cmd_audit(manifest: RunManifest) -> int:
    path = manifest.transcript or manifest.config
    if path is None:
        raise ConfigError("audit needs --transcript PATH")
    if not Path(path).is_file():
        raise OSError(f"cannot read transcript {path}")
    cfg, streams = read_transcript(path)
    schedule = build_schedule(cfg)
    F = fractional_digits(cfg.n, cfg.D)
    ledgers = []
    for i in range(cfg.m):
        msgs = parse_stream(streams.get(i, ""), F, expected=len(schedule.indices(i)))
        led = BudgetLedger(i)
        led.record_all(msgs)
        ledgers.append(led)
        if led.wire_bits != len(streams.get(i, "")):
            raise FramingError(f"machine {i}: {len(streams[i])} bits on the wire, ledger counts {led.wire_bits}")
    est = replay(cfg, streams)
    audit = expected_length_audit(ledgers, cfg.n, cfg.D)
    over = [led.machine_id for led in ledgers if led.payload_bits > cfg.B]
    print(
        f"OK messages={audit.messages} payload={audit.total_payload_bits} framing={audit.total_framing_bits}"
        f" max_machine_payload={max(audit.per_machine_payload, default=0)}"
        + (f" jhat={est.jhat}" if est.jhat is not None else "")
    )
    if over:
        print(f"note: machines over budget B={cfg.B:g}: {over}")
    if manifest.out is not None and manifest.subcommand == "audit" and manifest.fmt == "json":
        result = {
            "config_hash": cfg.config_hash(),
            "messages": audit.messages,
            "total_payload_bits": audit.total_payload_bits,
            "total_framing_bits": audit.total_framing_bits,
            "payload_bits": list(audit.per_machine_payload),
            "over_budget": over,
        }
        _write(manifest.out / "audit.json", _dump_json(result))
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "sweep": cmd_sweep,
    "theory": cmd_theory,
    "calibrate-tau": cmd_calibrate_tau,
    "audit": cmd_audit,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    manifest = RunManifest(
        subcommand=args.subcommand,
        config=args.config,
        out=args.out,
        seed=args.seed,
        threads=max(1, args.threads),
        fmt=args.fmt,
        transcript=args.transcript,
    )
    try:
        return COMMANDS[manifest.subcommand](manifest)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InfeasibleScheduleError, FramingError, MissingMessageError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
