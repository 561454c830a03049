"""Binary frame codec, frame logs, CSV ingestion and timed replay.

Frame layout (little-endian, 34 bytes, fits a 64-byte CAN-FD payload)::

    0   uint32  seq
    4   uint32  timestamp_us   (wraps every 2**32 us)
    8   6 x uint32 channels    (28 significant bits)
    32  uint16  CRC-16/CCITT-FALSE over bytes 0..31

A frame log is an 8-byte header ``b"FTIND\\x01"`` + uint16 format version,
followed by concatenated frames.
"""

from __future__ import annotations

import binascii
import csv
import logging
import struct
import sys
import threading
import time
from collections import deque
from collections.abc import Callable, Iterable, Iterator
from dataclasses import dataclass

import numpy as np

from .errors import BadCrc, BadLength, ChannelOverflow, RateError, SchemaError
from .synth import CSV_HEADER, MAX_RATE_HZ, Dataset

log = logging.getLogger(__name__)

FRAME_SIZE = 34
CHANNEL_LIMIT = 1 << 28
LOG_MAGIC = b"FTIND\x01"
LOG_VERSION = 1
LOG_HEADER = LOG_MAGIC + struct.pack("<H", LOG_VERSION)

_BODY = struct.Struct("<II6I")
_CRC = struct.Struct("<H")


def crc16_ccitt_false(data: bytes) -> int:
    """CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no xorout."""
    return binascii.crc_hqx(data, 0xFFFF)


@dataclass(frozen=True)
class RawFrame:
    seq: int
    timestamp_us: int
    channels: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        if len(self.channels) != 6:
            raise ValueError("a frame carries exactly six channels")


def encode_frame(f: RawFrame) -> bytes:
    for i, c in enumerate(f.channels):
        if not 0 <= c < CHANNEL_LIMIT:
            raise ChannelOverflow(f"channel {i} value {c} does not fit in 28 bits")
    try:
        body = _BODY.pack(f.seq, f.timestamp_us, *f.channels)
    except struct.error as exc:
        raise ValueError(f"frame field out of range: {exc}") from exc
    return body + _CRC.pack(crc16_ccitt_false(body))


def decode_frame(data: bytes) -> RawFrame:
    if len(data) != FRAME_SIZE:
        raise BadLength(f"frame must be {FRAME_SIZE} bytes, got {len(data)}")
    body = bytes(data[:32])
    (crc,) = _CRC.unpack_from(data, 32)
    if crc != crc16_ccitt_false(body):
        raise BadCrc("frame CRC mismatch")
    seq, ts, *channels = _BODY.unpack(body)
    for i, c in enumerate(channels):
        if c >= CHANNEL_LIMIT:
            raise ChannelOverflow(f"channel {i} has bits set above bit 27")
    return RawFrame(seq, ts, tuple(channels))


def frames_from_dataset(ds: Dataset, seq0: int = 0) -> Iterator[RawFrame]:
    for k, (t, counts) in enumerate(zip(ds.t_us.tolist(), ds.counts.tolist())):
        yield RawFrame((seq0 + k) & 0xFFFFFFFF, t & 0xFFFFFFFF, tuple(counts))


def write_frame_log(frames: Iterable[RawFrame], path) -> int:
    n = 0
    with open(path, "wb") as fh:
        fh.write(LOG_HEADER)
        for f in frames:
            fh.write(encode_frame(f))
            n += 1
    return n


def iter_frame_log(path) -> Iterator[RawFrame]:
    with open(path, "rb") as fh:
        header = fh.read(len(LOG_HEADER))
        if header[: len(LOG_MAGIC)] != LOG_MAGIC:
            raise SchemaError(f"{path} is not a frame log")
        (version,) = struct.unpack("<H", header[len(LOG_MAGIC) :])
        if version != LOG_VERSION:
            raise SchemaError(f"unsupported frame log version {version}")
        while chunk := fh.read(FRAME_SIZE):
            yield decode_frame(chunk)


def read_frame_log(path) -> list[RawFrame]:
    return list(iter_frame_log(path))


def sequence_gaps(frames: Iterable[RawFrame]) -> list[tuple[int, int]]:
    """(expected, got) pairs wherever seq does not advance by exactly one."""
    gaps = []
    prev = None
    for f in frames:
        if prev is not None and f.seq != (prev + 1) & 0xFFFFFFFF:
            gaps.append(((prev + 1) & 0xFFFFFFFF, f.seq))
        prev = f.seq
    return gaps


# --- CSV ---------------------------------------------------------------------


@dataclass
class ColumnStats:
    rows: int
    minimum: dict[str, float]
    maximum: dict[str, float]


def iter_csv_rows(path, required=CSV_HEADER) -> Iterator[tuple[int, dict[str, str]]]:
    """Stream (line number, row) pairs after checking the header."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("empty file", line=1) from None
        missing = [c for c in required if c not in header]
        if missing:
            raise SchemaError(f"missing column(s): {', '.join(missing)}", line=1)
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise SchemaError(
                    f"expected {len(header)} fields, got {len(row)}", line=reader.line_num
                )
            yield reader.line_num, dict(zip(header, row))


def _parse(value: str, column: str, line: int, integer: bool):
    try:
        return int(value) if integer else float(value)
    except ValueError:
        raise ValueError(f"line {line}: column {column!r} is not numeric: {value!r}") from None


_INT_COLUMNS = {"t_us", *(f"ch{i}" for i in range(6))}


def scan_csv(path, required=CSV_HEADER) -> ColumnStats:
    """Row count and per-column min/max in constant memory."""
    lo: dict[str, float] = {}
    hi: dict[str, float] = {}
    rows = 0
    for line, row in iter_csv_rows(path, required):
        for col in required:
            v = _parse(row[col], col, line, col in _INT_COLUMNS)
            if col not in lo:
                lo[col] = hi[col] = v
            else:
                lo[col] = min(lo[col], v)
                hi[col] = max(hi[col], v)
        rows += 1
    return ColumnStats(rows, lo, hi)


def ingest_csv(path) -> tuple[Dataset, ColumnStats]:
    """Parse a dataset CSV (``t_us, fx..tz, ch0..ch5``) losslessly."""
    t, w, c = [], [], []
    lo: dict[str, float] = {}
    hi: dict[str, float] = {}
    for line, row in iter_csv_rows(path):
        vals = {col: _parse(row[col], col, line, col in _INT_COLUMNS) for col in CSV_HEADER}
        for col, v in vals.items():
            if col not in lo:
                lo[col] = hi[col] = v
            else:
                lo[col] = min(lo[col], v)
                hi[col] = max(hi[col], v)
        t.append(vals["t_us"])
        w.append([vals[a] for a in CSV_HEADER[1:7]])
        c.append([vals[f"ch{i}"] for i in range(6)])
    ds = Dataset(np.array(t, dtype=np.int64), np.array(w).reshape(-1, 6),
                 np.array(c, dtype=np.int64).reshape(-1, 6))
    return ds, ColumnStats(len(t), lo, hi)


# --- replay ------------------------------------------------------------------


@dataclass
class ReplayStats:
    requested_rate: float
    achieved_rate: float
    elapsed_s: float
    max_jitter_s: float
    delivered: int
    dropped: int
    seq_gaps: int = 0

    def to_dict(self) -> dict:
        return dict(vars(self))


class _DropOldestQueue:
    """Bounded SPSC buffer; a full buffer evicts its oldest item."""

    def __init__(self, capacity: int):
        self._items: deque = deque()
        self._capacity = capacity
        self._lock = threading.Lock()
        self._ready = threading.Condition(self._lock)
        self.dropped = 0
        self.closed = False

    def put(self, item) -> None:
        with self._lock:
            if len(self._items) >= self._capacity:
                self._items.popleft()
                self.dropped += 1
            self._items.append(item)
            self._ready.notify()

    def close(self) -> None:
        with self._lock:
            self.closed = True
            self._ready.notify()

    def get(self):
        """Next item, or None once closed and drained."""
        with self._lock:
            while not self._items and not self.closed:
                self._ready.wait()
            return self._items.popleft() if self._items else None


def _sleep_until(deadline: float) -> None:
    # coarse sleep, then spin for the last stretch
    while True:
        remaining = deadline - time.perf_counter()
        if remaining <= 0:
            return
        if remaining > 2e-3:
            time.sleep(remaining - 1.5e-3)


def replay(
    frames: Iterable[RawFrame],
    rate: float,
    sink: Callable[[RawFrame], None],
    capacity: int = 1024,
) -> ReplayStats:
    """Emit ``frames`` at ``rate`` Hz to ``sink`` on a consumer thread.

    Frame k is released at ``t0 + k / rate``; the run lasts ``n / rate``
    seconds. If the sink falls more than ``capacity`` frames behind, the
    oldest pending frames are dropped and counted.
    """
    if not 1 <= rate <= MAX_RATE_HZ:
        raise RateError(f"replay rate {rate} Hz outside [1, {MAX_RATE_HZ:g}]")
    frames = list(frames)
    queue = _DropOldestQueue(capacity)
    delivered = 0
    gaps = 0
    errors: list[BaseException] = []

    def consume():
        nonlocal delivered, gaps
        prev = None
        try:
            while (f := queue.get()) is not None:
                if prev is not None and f.seq != (prev + 1) & 0xFFFFFFFF:
                    gaps += 1
                prev = f.seq
                sink(f)
                delivered += 1
        except BaseException as exc:  # surfaced to the caller after join
            errors.append(exc)

    worker = threading.Thread(target=consume, name="ftind-replay-sink", daemon=True)
    worker.start()
    period = 1.0 / rate
    jitter = 0.0
    t0 = time.perf_counter()
    for k, f in enumerate(frames):
        due = t0 + k * period
        _sleep_until(due)
        jitter = max(jitter, time.perf_counter() - due)
        queue.put(f)
    _sleep_until(t0 + len(frames) * period)
    elapsed = time.perf_counter() - t0
    queue.close()
    worker.join()
    if errors:
        raise errors[0]
    n = len(frames)
    return ReplayStats(
        requested_rate=rate,
        achieved_rate=n / elapsed if elapsed > 0 else float("inf"),
        elapsed_s=elapsed,
        max_jitter_s=jitter,
        delivered=delivered,
        dropped=queue.dropped,
        seq_gaps=gaps,
    )


def make_sink(kind: str, path=None):
    """Sink callables for the CLI: ``null``, ``stdout`` (hex lines), ``file`` (frame log).

    Returns (sink, close) where ``close`` flushes/closes any file handle.
    """
    if kind == "null":
        return (lambda f: None), (lambda: None)
    if kind == "stdout":
        out = sys.stdout

        def emit(f):
            out.write(encode_frame(f).hex() + "\n")

        return emit, out.flush
    if kind == "file":
        if path is None:
            raise ValueError("file sink needs a path")
        fh = open(path, "wb")
        fh.write(LOG_HEADER)
        return (lambda f: fh.write(encode_frame(f))), fh.close
    raise ValueError(f"unknown sink {kind!r}")
