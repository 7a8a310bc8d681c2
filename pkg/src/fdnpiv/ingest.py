"""Loop-detector CSV ingestion and lagged-occupancy instrument construction."""

from __future__ import annotations

import csv
import datetime as dt
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

SLOTS_PER_DAY = 288
SLOT_MINUTES = 5

DEFAULT_SCHEMA = {
    "detector_id": "detector_id",
    "timestamp": "timestamp",
    "flow": "flow_veh_per_5min",
    "occupancy": "occupancy_pct",
}


class SchemaError(ValueError):
    """The CSV header lacks a required column."""


class EmptySampleError(ValueError):
    """No rows survive filtering or instrument construction."""


@dataclass(frozen=True)
class DetectorRecord:
    detector_id: str
    day: dt.date
    interval: int
    flow: float
    occupancy: float

    def __post_init__(self):
        if not 0 <= self.interval < SLOTS_PER_DAY:
            raise ValueError(f"interval {self.interval} outside 0..{SLOTS_PER_DAY - 1}")
        if not self.flow >= 0:
            raise ValueError("negative flow")
        if not 0 <= self.occupancy <= 100:
            raise ValueError("occupancy out of range")


@dataclass
class ReadSummary:
    accepted: int = 0
    rejected: list = field(default_factory=list)  # (line number, reason)

    @property
    def n_rejected(self) -> int:
        return len(self.rejected)


@dataclass(frozen=True)
class SiteConfig:
    """Which detectors, days and time-of-day slots make up the analysis sample.

    ``window`` is an inclusive slot range; ``(144, 287)`` is 12:00-24:00.
    """

    name: str = "site"
    detectors: tuple = ()
    window: tuple[int, int] = (144, SLOTS_PER_DAY - 1)
    workdays_only: bool = True
    date_range: tuple[dt.date, dt.date] | None = None
    holidays: frozenset = frozenset()

    def __post_init__(self):
        lo, hi = self.window
        if not 0 <= lo <= hi < SLOTS_PER_DAY:
            raise ValueError(f"invalid slot window {self.window}")
        if self.date_range is not None and self.date_range[0] > self.date_range[1]:
            raise ValueError("empty date range")
        object.__setattr__(self, "detectors", tuple(self.detectors))
        object.__setattr__(self, "holidays", frozenset(self.holidays))

    def is_workday(self, day: dt.date) -> bool:
        return day.weekday() < 5 and day not in self.holidays


@dataclass(frozen=True)
class RegressionSample:
    """Index-aligned response, endogenous covariate and instrument."""

    q: np.ndarray
    o: np.ndarray
    z: np.ndarray
    provenance: tuple = ()  # (detector_id, day, interval) per row
    dropped: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.q)
        if n < 1:
            raise EmptySampleError("regression sample is empty")
        if not len(self.o) == len(self.z) == n:
            raise ValueError("q, o and z must have equal length")
        if self.provenance and len(self.provenance) != n:
            raise ValueError("provenance must align with the data vectors")
        for a in (self.q, self.o, self.z):
            if not np.all(np.isfinite(a)):
                raise ValueError("regression sample contains missing values")

    def __len__(self) -> int:
        return len(self.q)

    @classmethod
    def from_arrays(cls, q, o, z=None) -> "RegressionSample":
        o = np.asarray(o, dtype=float)
        return cls(np.asarray(q, dtype=float), o,
                   o.copy() if z is None else np.asarray(z, dtype=float))


def parse_slot(text: str) -> int:
    """``"HH:MM"`` to the index of its 5-minute slot (``"12:00"`` is 144)."""
    hh, mm = text.strip().split(":")[:2]
    minutes = int(hh) * 60 + int(mm)
    if not 0 <= minutes < 24 * 60:
        raise ValueError(f"time of day out of range: {text!r}")
    return minutes // SLOT_MINUTES


def read_detector_csv(path, schema: dict | None = None):
    """Parse a detector CSV into validated records.

    `schema` maps the logical fields ``detector_id``, ``flow``,
    ``occupancy`` and either ``timestamp`` (``YYYY-MM-DD HH:MM``) or the pair
    ``date`` / ``time`` to CSV header names.

    Returns
    -------
    records : list of DetectorRecord
    summary : ReadSummary
        Accepted count and ``(line, reason)`` for every rejected row.
    """
    schema = dict(DEFAULT_SCHEMA if schema is None else schema)
    path = Path(path)
    records: list[DetectorRecord] = []
    summary = ReadSummary()
    seen = set()
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty file")
        header = [h.strip() for h in header]
        split_time = "timestamp" not in schema
        needed = ["detector_id", "flow", "occupancy"] + (
            ["date", "time"] if split_time else ["timestamp"])
        missing = [schema.get(k, k) for k in needed if schema.get(k, k) not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")
        col = {k: header.index(schema[k]) for k in needed}
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                if split_time:
                    day = dt.date.fromisoformat(row[col["date"]].strip())
                    slot = parse_slot(row[col["time"]])
                else:
                    stamp = row[col["timestamp"]].strip()
                    date_part, time_part = stamp.replace("T", " ").split()
                    day = dt.date.fromisoformat(date_part)
                    slot = parse_slot(time_part)
                rec = DetectorRecord(row[col["detector_id"]].strip(), day, slot,
                                     float(row[col["flow"]]), float(row[col["occupancy"]]))
            except (ValueError, IndexError) as exc:
                summary.rejected.append((line_no, str(exc)))
                continue
            key = (rec.detector_id, rec.day, rec.interval)
            if key in seen:
                summary.rejected.append((line_no, "duplicate (detector, day, interval)"))
                continue
            seen.add(key)
            records.append(rec)
    if not records and not summary.rejected:
        raise ValueError(f"{path}: no data rows")
    summary.accepted = len(records)
    if summary.rejected:
        log.warning("%s: rejected %d row(s)", path, summary.n_rejected)
    return records, summary


def previous_workday(day: dt.date, cfg: SiteConfig, lag: int = 1) -> dt.date:
    """The `lag`-th workday before `day`, skipping weekends and holidays."""
    d = day
    for _ in range(lag):
        d -= dt.timedelta(days=1)
        while not cfg.is_workday(d):
            d -= dt.timedelta(days=1)
    return d


def build_lagged_instrument(series, cfg: SiteConfig, half_window: int = 15,
                            lag_days: int = 1, max_missing: float = 0.2) -> RegressionSample:
    """Pair each in-window observation with the previous workday's mean occupancy.

    For a row at slot ``i`` on day ``t`` the instrument is the average
    occupancy over slots ``i - half_window .. i + half_window`` (truncated to
    the day) on the `lag_days`-th previous workday. Rows whose window is more
    than `max_missing` empty, or whose lag day is absent, are dropped.
    """
    if half_window < 0:
        raise ValueError("half_window must be >= 0")
    if lag_days < 1:
        raise ValueError("lag_days must be >= 1")
    by_day: dict = {}
    for r in series:
        if cfg.detectors and r.detector_id not in cfg.detectors:
            continue
        by_day.setdefault((r.detector_id, r.day), {})[r.interval] = r

    grids = {}
    for key, slots in by_day.items():
        occ = np.full(SLOTS_PER_DAY, np.nan)
        idx = np.fromiter(slots.keys(), dtype=int)
        occ[idx] = [slots[i].occupancy for i in idx]
        grids[key] = occ

    lo, hi = cfg.window
    q, o, z, prov = [], [], [], []
    dropped = {"lag_day_absent": 0, "window_missing": 0}
    for (det, day) in sorted(by_day):
        if cfg.date_range is not None and not cfg.date_range[0] <= day <= cfg.date_range[1]:
            continue
        if cfg.workdays_only and not cfg.is_workday(day):
            continue
        slots = by_day[(det, day)]
        rows = [i for i in sorted(slots) if lo <= i <= hi]
        if not rows:
            continue
        prev = grids.get((det, previous_workday(day, cfg, lag_days)))
        if prev is None:
            dropped["lag_day_absent"] += len(rows)
            continue
        for i in rows:
            a, b = max(0, i - half_window), min(SLOTS_PER_DAY - 1, i + half_window)
            win = prev[a : b + 1]
            ok = ~np.isnan(win)
            if ok.sum() == 0 or 1.0 - ok.mean() > max_missing:
                dropped["window_missing"] += 1
                continue
            rec = slots[i]
            q.append(rec.flow)
            o.append(rec.occupancy)
            z.append(win[ok].mean())
            prov.append((det, day, i))
    if not q:
        raise EmptySampleError(f"no rows survive instrument construction ({dropped})")
    if any(dropped.values()):
        log.info("instrument construction dropped rows: %s", dropped)
    return RegressionSample(np.array(q), np.array(o), np.array(z), tuple(prov), dropped)
