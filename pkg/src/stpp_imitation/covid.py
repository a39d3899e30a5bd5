"""County-level case counts as event sequences, grouping, and lockdown what-ifs.

Raw time is measured in days since the dataset's first reported case; new cases
reported on day ``k`` are spread uniformly (seeded) over ``[k, k + 1)``. Every
event of a county sits at the county centroid ``(lat, lon)``.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Literal, Sequence

import numpy as np

from . import __version__
from .events import EventSequence, ScalingTransform, StaticFeatures, write_sequence_dir
from .generator import GeneratorParams, predict_until, rollout

FEATURE_NAMES = ("log10_population", "lockdown_day", "lat", "lon")
MISSING_LOCKDOWN = -1.0
Aggregation = Literal["per_case", "per_hundred"]


@dataclass(frozen=True)
class CountyRecord:
    fips: str
    lat: float
    lon: float
    population: float
    lockdown_date: dt.date | None
    start_date: dt.date
    cumulative: np.ndarray
    name: str = ""

    def __post_init__(self):
        c = np.asarray(self.cumulative, dtype=np.int64)
        c.setflags(write=False)
        object.__setattr__(self, "cumulative", c)
        if not self.population > 0:
            raise ValueError(f"county {self.fips}: population must be positive")
        if np.any(c < 0) or np.any(np.diff(c) < 0):
            raise ValueError(f"county {self.fips}: cumulative counts must be non-negative and nondecreasing")

    @property
    def label(self) -> str:
        return self.name or self.fips

    @property
    def total(self) -> int:
        return int(self.cumulative[-1]) if self.cumulative.size else 0

    @property
    def end_date(self) -> dt.date:
        return self.start_date + dt.timedelta(days=len(self.cumulative) - 1)

    def daily_increments(self) -> np.ndarray:
        return np.diff(self.cumulative, prepend=0)


@dataclass(frozen=True)
class CovidContext:
    """Dataset-level calendar anchor and coordinate scaling."""

    anchor: dt.date
    end_date: dt.date
    transform: ScalingTransform

    @property
    def horizon_days(self) -> float:
        return float((self.end_date - self.anchor).days + 1)

    def day(self, date: dt.date) -> float:
        return float((date - self.anchor).days)

    def to_dict(self) -> dict:
        return {"anchor": self.anchor.isoformat(), "end_date": self.end_date.isoformat(),
                "transform": self.transform.to_dict(), "feature_names": list(FEATURE_NAMES)}

    @classmethod
    def from_dict(cls, d: dict) -> CovidContext:
        return cls(dt.date.fromisoformat(d["anchor"]), dt.date.fromisoformat(d["end_date"]),
                   ScalingTransform.from_dict(d["transform"]))


def _parse_date(s: str) -> dt.date | None:
    s = s.strip()
    return dt.date.fromisoformat(s) if s else None


def read_county_csv(path: str | Path) -> list[CountyRecord]:
    """Wide CSV: ``fips,lat,lon,population,lockdown_date,YYYY-MM-DD...`` (optional ``name``)."""
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        date_cols = []
        for i, h in enumerate(header):
            try:
                date_cols.append((i, dt.date.fromisoformat(h)))
            except ValueError:
                continue
        if not date_cols:
            raise ValueError(f"{path}: no YYYY-MM-DD count columns")
        dates = [d for _, d in date_cols]
        if any((b - a).days != 1 for a, b in zip(dates, dates[1:])):
            raise ValueError(f"{path}: date columns must be consecutive days")
        col = {h: i for i, h in enumerate(header)}
        for req in ("fips", "lat", "lon", "population", "lockdown_date"):
            if req not in col:
                raise ValueError(f"{path}: missing column {req!r}")
        records = []
        for row in reader:
            if not row:
                continue
            records.append(CountyRecord(
                fips=row[col["fips"]].strip(),
                lat=float(row[col["lat"]]),
                lon=float(row[col["lon"]]),
                population=float(row[col["population"]]),
                lockdown_date=_parse_date(row[col["lockdown_date"]]),
                start_date=dates[0],
                cumulative=np.array([int(float(row[i] or 0)) for i, _ in date_cols]),
                name=row[col["name"]].strip() if "name" in col else "",
            ))
    return records


def write_county_csv(records: Sequence[CountyRecord], path: str | Path) -> None:
    start = records[0].start_date
    n = len(records[0].cumulative)
    dates = [(start + dt.timedelta(days=k)).isoformat() for k in range(n)]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["fips", "name", "lat", "lon", "population", "lockdown_date", *dates])
        for r in records:
            w.writerow([r.fips, r.name, r.lat, r.lon, r.population,
                        r.lockdown_date.isoformat() if r.lockdown_date else "", *map(int, r.cumulative)])


def first_case_date(records: Iterable[CountyRecord]) -> dt.date:
    firsts = [r.start_date + dt.timedelta(days=int(np.argmax(r.cumulative > 0))) for r in records if r.total > 0]
    if not firsts:
        raise ValueError("no county reports any case")
    return min(firsts)


def fit_context(records: Sequence[CountyRecord]) -> CovidContext:
    """Anchor at the first reported case; scale days to [0, 2] and centroids to [-2, 2]."""
    anchor = first_case_date(records)
    end = max(r.end_date for r in records)
    horizon = (end - anchor).days + 1
    latlon = np.array([[r.lat, r.lon] for r in records])
    offsets, scales = [], []
    for axis in range(2):
        lo, hi = latlon[:, axis].min(), latlon[:, axis].max()
        offsets.append(float(0.5 * (lo + hi)))
        scales.append(4.0 / float(hi - lo) if hi > lo else 1.0)
    return CovidContext(anchor, end, ScalingTransform(0.0, 2.0 / horizon, tuple(offsets), tuple(scales)))


def sequence_length(rec: CountyRecord, aggregation: Aggregation = "per_case") -> int:
    return rec.total if aggregation == "per_case" else rec.total // 100


def counts_to_events(rec: CountyRecord, aggregation: Aggregation = "per_case", seed=0,
                     context: CovidContext | None = None) -> EventSequence:
    """One event per new case (or per crossed multiple of 100), jittered within its day.

    Without ``context`` times are days since the record's first column and the
    sequence is in raw coordinates; with it, times are measured from the dataset
    anchor and everything is scaled.
    """
    c = np.asarray(rec.cumulative, dtype=np.int64)
    if np.any(np.diff(c) < 0):
        raise ValueError(f"county {rec.fips}: cumulative series decreases")
    if aggregation == "per_case":
        per_day = np.diff(c, prepend=0)
    elif aggregation == "per_hundred":
        per_day = np.diff(c // 100, prepend=0)
    else:
        raise ValueError(f"unknown aggregation {aggregation!r}")
    offset = 0.0 if context is None else float((rec.start_date - context.anchor).days)
    horizon = offset + len(c)
    rng = np.random.default_rng(seed)
    days = np.repeat(np.arange(len(c), dtype=float), per_day)
    times = np.sort(days + rng.random(days.size)) + offset
    keep = times >= 0.0  # days before the anchor can only exist for zero counts
    times = times[keep]
    data = np.column_stack([times, np.full(times.size, rec.lat), np.full(times.size, rec.lon)])
    seq = EventSequence(data, horizon)
    if context is None:
        return seq
    scaled = context.transform.scale(seq)
    return scaled.with_features(build_features(rec, context).values)


def events_to_daily(seq: EventSequence, n_days: int, unit: int = 1, day_offset: float = 0.0) -> np.ndarray:
    """Re-bin raw-day event times into per-day counts (times ``unit``)."""
    idx = np.floor(seq.times - day_offset).astype(int)
    return np.bincount(idx[(idx >= 0) & (idx < n_days)], minlength=n_days) * unit


def build_features(rec: CountyRecord, context: CovidContext) -> StaticFeatures:
    """``[log10(population), scaled lockdown day or -1, scaled lat, scaled lon]``."""
    if rec.lockdown_date is None:
        lockdown, flags = MISSING_LOCKDOWN, ("lockdown_missing",)
    else:
        lockdown, flags = float(context.transform.scale_time(context.day(rec.lockdown_date))), ()
    lat, lon = context.transform.scale_location([rec.lat, rec.lon])
    return StaticFeatures(np.array([math.log10(rec.population), lockdown, lat, lon]), FEATURE_NAMES, flags)


@dataclass(frozen=True)
class GroupSpec:
    """Upper-inclusive bucket bounds; the last bucket is open-ended."""

    bounds: tuple[int, ...] = (100, 1000, 5000, 10000, 20000)

    def __post_init__(self):
        if list(self.bounds) != sorted(set(self.bounds)) or (self.bounds and self.bounds[0] < 0):
            raise ValueError("bucket bounds must be strictly increasing and non-negative")

    def bucket(self, length: int) -> int:
        for i, b in enumerate(self.bounds):
            if length <= b:
                return i
        return len(self.bounds)

    def labels(self) -> list[str]:
        out, lo = [], None
        for b in self.bounds:
            out.append(f"le{b}" if lo is None else f"gt{lo}_le{b}")
            lo = b
        out.append(f"gt{lo}")
        return out


def group_counties(records: Sequence[CountyRecord], spec: GroupSpec = GroupSpec()) -> dict[str, list[CountyRecord]]:
    """Assign every county to exactly one length bucket (per-case sequence length)."""
    labels = spec.labels()
    groups: dict[str, list[CountyRecord]] = {lab: [] for lab in labels}
    for r in records:
        groups[labels[spec.bucket(sequence_length(r, "per_case"))]].append(r)
    return groups


def write_group_datasets(records: Sequence[CountyRecord], out_dir: str | Path, context: CovidContext,
                         spec: GroupSpec = GroupSpec(), seed: int = 0) -> dict:
    """Write scaled per-group event CSV directories and a manifest.

    The open-ended top bucket holds hot spots: each gets its own directory of
    per-hundred events. Counties without cases are listed but not written.
    """
    out_dir = Path(out_dir)
    groups = group_counties(records, spec)
    hot = spec.labels()[-1]
    manifest = {"version": __version__, "context": context.to_dict(), "groups": {}, "excluded_zero_case": []}
    for gi, (label, recs) in enumerate(groups.items()):
        entry = {"counties": [r.fips for r in recs], "aggregation": "per_hundred" if label == hot else "per_case"}
        active = [r for r in recs if r.total > 0]
        manifest["excluded_zero_case"] += [r.fips for r in recs if r.total == 0]
        if label == hot:
            entry["dirs"] = {}
            for r in active:
                seq = counts_to_events(r, "per_hundred", (seed, gi, int(r.fips) if r.fips.isdigit() else 0), context)
                d = out_dir / label / r.fips
                write_sequence_dir([seq], d, prefix=r.fips)
                entry["dirs"][r.fips] = str(d)
        else:
            seqs = [counts_to_events(r, "per_case", (seed, gi, i), context) for i, r in enumerate(active)]
            if seqs:
                write_sequence_dir(seqs, out_dir / label, prefix="county")
            entry["dir"] = str(out_dir / label)
        manifest["groups"][label] = entry
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return manifest


@dataclass(frozen=True)
class ScenarioSpec:
    shift_days: int = 0
    rollouts: int = 10
    end_date: dt.date | None = None
    history_until: dt.date | None = None
    aggregation: Aggregation = "per_case"

    def __post_init__(self):
        if self.rollouts < 1:
            raise ValueError("need at least one rollout")


@dataclass
class ScenarioReport:
    county: str
    shift_days: int
    R: int
    final_mean: float
    final_std: float
    trajectories: list[list[int]]
    dates: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"version": __version__, "county": self.county, "shift_days": self.shift_days, "R": self.R,
                "final_mean": self.final_mean, "final_std": self.final_std,
                "trajectories": self.trajectories, "dates": self.dates}

    @classmethod
    def from_dict(cls, d: dict) -> ScenarioReport:
        return cls(d["county"], int(d["shift_days"]), int(d["R"]), float(d["final_mean"]), float(d["final_std"]),
                   [list(map(int, t)) for t in d["trajectories"]], list(d.get("dates", [])))


def run_scenario(params: GeneratorParams, rec: CountyRecord, scenario: ScenarioSpec, context: CovidContext,
                 seed=0) -> ScenarioReport:
    """Regenerate a county's cumulative curve with its lockdown moved by ``shift_days``.

    With ``history_until`` the real events before that date condition the model
    and generation continues from there; otherwise whole sequences are generated.
    Mean and (population) standard deviation are taken over exactly ``R`` rollouts.
    """
    names = params.feature_names
    if "lockdown_day" not in names:
        raise ValueError("model was trained without a 'lockdown_day' feature")
    if rec.lockdown_date is None:
        raise ValueError(f"county {rec.label} has no lockdown date to shift")
    end = scenario.end_date or context.end_date
    n_days = (end - context.anchor).days + 1
    horizon = float(context.transform.scale_time(n_days))
    feats = build_features(rec, context).values.copy()
    shifted = rec.lockdown_date + dt.timedelta(days=scenario.shift_days)
    feats[names.index("lockdown_day")] = float(context.transform.scale_time(context.day(shifted)))
    unit = 100 if scenario.aggregation == "per_hundred" else 1
    history = None
    if scenario.history_until is not None:
        full = counts_to_events(rec, scenario.aggregation, (seed, 7), context)
        cut = float(context.transform.scale_time(context.day(scenario.history_until)))
        history = EventSequence(full.data[full.times < cut], cut, feats)
    trajectories = []
    for r in range(scenario.rollouts):
        if history is None:
            gen = rollout(params, feats, horizon, seed=(seed, r)).sequence
        else:
            gen = predict_until(params, history, horizon, feats, seed=(seed, r))
        days = context.transform.unscale_time(gen.times)
        daily = np.bincount(np.clip(np.floor(days).astype(int), 0, n_days - 1), minlength=n_days) * unit
        trajectories.append(np.cumsum(daily).astype(int).tolist())
    finals = np.array([t[-1] for t in trajectories], dtype=float)
    dates = [(context.anchor + dt.timedelta(days=k)).isoformat() for k in range(n_days)]
    return ScenarioReport(rec.label, scenario.shift_days, scenario.rollouts, float(finals.mean()),
                          float(finals.std()), trajectories, dates)


def load_reference_table() -> list[dict]:
    """Published lockdown what-if figures, for report-format checks only."""
    text = resources.files("stpp_imitation").joinpath("data/lockdown_reference.json").read_text()
    return json.loads(text)["rows"]


def format_scenario_table(rows: Sequence[dict]) -> str:
    """Rows ``{county, real, early: (mean, std), late: (mean, std)}`` as a text table."""
    lines = ["County Name | Real Lockdown | Early Lockdown | Late Lockdown"]
    for row in rows:
        early, late = row["early"], row["late"]
        lines.append(f"{row['county']} | {int(round(row['real']))} | "
                     f"{int(round(early[0]))}±{int(round(early[1]))} | {int(round(late[0]))}±{int(round(late[1]))}")
    return "\n".join(lines)


def scenario_row(county: str, real: float, early: ScenarioReport, late: ScenarioReport) -> dict:
    return {"county": county, "real": real, "early": (early.final_mean, early.final_std),
            "late": (late.final_mean, late.final_std)}
