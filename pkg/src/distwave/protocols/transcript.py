"""Serialized run transcripts: the exact bits each machine sent.

Layout (text)::

    distwave-transcript 1
    config_hash = 3f2a...
    n = 4096
    m = 16
    B = 256.0
    D = 0.5
    mode = nonadaptive_i
    config = {...json...}
    machines = 16
    ---
    0 312 a4f0...
    1 0 -
    ...

Each machine line is ``id nbits hex``: the bit string is left-aligned in
``ceil(nbits / 4)`` hex digits (zero padded on the right).  A replay needs
nothing else: the schedule is rebuilt from the embedded config.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping

from ..config import ProtocolConfig
from ..errors import FramingError

__all__ = ["write_transcript", "read_transcript", "pack_bits", "unpack_bits"]

MAGIC = "distwave-transcript 1"


def pack_bits(bits: str) -> str:
    if not bits:
        return "-"
    pad = (-len(bits)) % 4
    width = (len(bits) + pad) // 4
    return format(int(bits + "0" * pad, 2), f"0{width}x")


def unpack_bits(hexstr: str, nbits: int) -> str:
    if nbits == 0:
        if hexstr not in ("-", ""):
            raise FramingError("zero-length record carries data")
        return ""
    width = (nbits + 3) // 4
    if len(hexstr) != width:
        raise FramingError(f"record holds {len(hexstr)} hex digits, {width} needed for {nbits} bits")
    try:
        value = int(hexstr, 16)
    except ValueError:
        raise FramingError(f"bad hex payload {hexstr[:16]!r}") from None
    return format(value, f"0{width * 4}b")[:nbits]


def write_transcript(path, cfg: ProtocolConfig, bitstreams: Mapping[int, str]) -> None:
    lines = [
        MAGIC,
        f"config_hash = {cfg.config_hash()}",
        f"n = {cfg.n}",
        f"m = {cfg.m}",
        f"B = {cfg.B!r}",
        f"D = {cfg.D!r}",
        f"mode = {cfg.mode}",
        f"config = {json.dumps(cfg.to_dict(), sort_keys=True)}",
        f"machines = {cfg.m}",
        "---",
    ]
    for i in range(cfg.m):
        bits = bitstreams.get(i, "")
        lines.append(f"{i} {len(bits)} {pack_bits(bits)}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_transcript(path) -> tuple[ProtocolConfig, dict[int, str]]:
    """Parse a transcript; structural damage raises :class:`FramingError`."""
    text = Path(path).read_text()
    lines = text.splitlines()
    if not lines or lines[0].strip() != MAGIC:
        raise FramingError(f"{path}: not a distwave transcript")
    try:
        sep = lines.index("---")
    except ValueError:
        raise FramingError(f"{path}: header not terminated") from None
    header = {}
    for line in lines[1:sep]:
        key, _, value = line.partition(" = ")
        header[key.strip()] = value
    try:
        cfg = ProtocolConfig.from_dict(json.loads(header["config"]))
        machines = int(header["machines"])
    except (KeyError, ValueError) as exc:
        raise FramingError(f"{path}: bad header ({exc})") from None
    if cfg.config_hash() != header.get("config_hash"):
        raise FramingError(f"{path}: config hash mismatch")
    body = lines[sep + 1:]
    if len(body) != machines:
        raise FramingError(f"{path}: {len(body)} machine records, header promises {machines}")
    streams = {}
    for line in body:
        parts = line.split()
        if len(parts) != 3:
            raise FramingError(f"{path}: malformed record {line[:40]!r}")
        try:
            i, nbits = int(parts[0]), int(parts[1])
        except ValueError:
            raise FramingError(f"{path}: malformed record {line[:40]!r}") from None
        streams[i] = unpack_bits(parts[2], nbits)
    return cfg, streams
