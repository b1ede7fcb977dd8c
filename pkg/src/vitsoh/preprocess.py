"""Turn raw cycle data into fixed-size model inputs and SOH labels.

The constant-current charge step is cut at a fixed voltage window, every
channel is resampled onto the window's time grid at a configurable number
of points, and per-cycle health labels are derived from the discharge
capacity. Also hosts the source/target split logic and the per-channel
min-max scaler fitted on training data only.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .errors import ConfigError, CoverageError, FormatError
from .simulator import CycleRecord

INDEX_VERSION = 1
INDEX_NAME = "index.json"
BLOB_NAME = "data.f32"

RAW_CHANNELS = ("current", "voltage", "temperature")
SUPPLEMENTARY_CHANNELS = RAW_CHANNELS + ("capacity", "resistance")
SPLIT_NAMES = ("source_train", "source_val", "source_test",
               "target_train", "target_test")


@dataclass
class SampleMatrix:
    """Model input X (channels x points) and SOH target for one cycle."""
    x: np.ndarray
    y: float
    cell_id: str
    cycle: int
    channels: tuple[str, ...]

    def __post_init__(self):
        if self.x.ndim != 2 or self.x.shape[0] != len(self.channels):
            raise ConfigError(
                f"sample matrix shape {self.x.shape} does not match "
                f"{len(self.channels)} channels")
        if not 0.0 < self.y <= 1.05:
            raise ConfigError(f"SOH label {self.y} outside (0, 1.05]")


@dataclass(frozen=True)
class SplitPlan:
    """How samples are assigned to source/target train/val/test."""
    source_cells: tuple[str, ...]
    target_cells: tuple[str, ...]
    train_ratio: float
    target_train_cycles: int
    seed: int = 0

    def __post_init__(self):
        if set(self.source_cells) & set(self.target_cells):
            raise ConfigError("source and target cell sets must be disjoint")
        if not 0.0 < self.train_ratio < 1.0:
            raise ConfigError("train_ratio must be in (0, 1)")
        if self.target_train_cycles < 1:
            raise ConfigError("target_train_cycles must be >= 1")


# ----------------------------------------------------------------------
# window extraction and resampling
# ----------------------------------------------------------------------
def _first_upward_crossing(time_s: np.ndarray, values: np.ndarray,
                           level: float) -> float:
    """Time where `values` first reaches `level`, linearly interpolated."""
    if values[0] == level:
        return float(time_s[0])
    if values[0] > level:
        raise CoverageError(
            f"series starts above level {level} (first value {values[0]:.6f})")
    above = np.nonzero(values >= level)[0]
    if above.size == 0:
        raise CoverageError(f"series never reaches level {level}")
    i = int(above[0])
    frac = (level - values[i - 1]) / (values[i] - values[i - 1])
    return float(time_s[i - 1] + frac * (time_s[i] - time_s[i - 1]))


def extract_voltage_window(record: CycleRecord, v_low: float,
                           v_high: float) -> tuple[float, float]:
    """CC-step times where voltage first crosses v_low and v_high."""
    if not v_low < v_high:
        raise ConfigError("requires v_low < v_high")
    t = record.cc_charge.time_s
    v = record.cc_charge.voltage_v
    t_low = _first_upward_crossing(t, v, v_low)
    t_high = _first_upward_crossing(t, v, v_high)
    return t_low, t_high


def discretize(time_s: np.ndarray, values: np.ndarray, t_low: float,
               t_high: float, points: int) -> np.ndarray:
    """Resample onto `points` equally spaced times in [t_low, t_high]."""
    if points < 2:
        raise ConfigError("discretization needs at least 2 points")
    if time_s[0] > t_low or time_s[-1] < t_high:
        raise CoverageError(
            f"series [{time_s[0]:.3f}, {time_s[-1]:.3f}] does not cover "
            f"[{t_low:.3f}, {t_high:.3f}]")
    grid = np.linspace(t_low, t_high, points)
    return np.interp(grid, time_s, values)


def coulomb_count(time_s: np.ndarray, current_a: np.ndarray, c_n_ah: float,
                  eta: float = 1.0) -> np.ndarray:
    """Remaining capacity per sample: C_N minus the current integral (Ah)."""
    dt = np.diff(time_s)
    if np.any(dt <= 0):
        raise ValueError("time axis must be strictly increasing")
    trapezoids = 0.5 * (current_a[1:] + current_a[:-1]) * dt
    drained = np.concatenate(([0.0], np.cumsum(trapezoids))) / 3600.0
    return c_n_ah - eta * drained


def internal_resistance(delta_v: float, delta_i: float) -> float:
    """Pulse-response resistance delta_v / delta_i."""
    if delta_i == 0:
        raise ZeroDivisionError("delta_i must be nonzero")
    return delta_v / delta_i


def soh_from_capacity(c_aged_ah: float, c_fresh_ah: float) -> float:
    if c_fresh_ah <= 0:
        raise ValueError("fresh capacity must be positive")
    return c_aged_ah / c_fresh_ah


def soh_from_resistance(r_aged: float, r_fresh: float, r_eol: float) -> float:
    if r_eol <= r_fresh:
        raise ValueError("end-of-life resistance must exceed fresh resistance")
    return (r_eol - r_aged) / (r_eol - r_fresh)


# ----------------------------------------------------------------------
# sample assembly
# ----------------------------------------------------------------------
def build_sample(record: CycleRecord, *, channels: str, v_low: float,
                 v_high: float, points: int, c_fresh_ah: float,
                 r_in: float | None = None) -> SampleMatrix:
    """Assemble one cycle's input matrix and SOH label.

    channels "raw" stacks current/voltage/temperature over the window;
    "supplementary" appends coulomb-counted capacity and the latest
    pulse-test resistance broadcast as a constant row.
    """
    if channels not in ("raw", "supplementary"):
        raise ConfigError(f"unknown channel set {channels!r}")
    t_low, t_high = extract_voltage_window(record, v_low, v_high)
    cc = record.cc_charge
    rows = [
        discretize(cc.time_s, cc.current_a, t_low, t_high, points),
        discretize(cc.time_s, cc.voltage_v, t_low, t_high, points),
        discretize(cc.time_s, cc.temp_c, t_low, t_high, points),
    ]
    names = RAW_CHANNELS
    if channels == "supplementary":
        if r_in is None:
            raise ConfigError(
                f"cycle {record.cycle}: no pulse test at or before this cycle")
        grid = np.linspace(t_low, t_high, points)
        rows.append(coulomb_count(grid, rows[0], c_fresh_ah))
        rows.append(np.full(points, r_in))
        names = SUPPLEMENTARY_CHANNELS
    y = soh_from_capacity(record.discharge_capacity_ah, c_fresh_ah)
    return SampleMatrix(x=np.vstack(rows), y=y, cell_id="", cycle=record.cycle,
                        channels=names)


def build_samples(records_by_cell: dict[str, list[CycleRecord]],
                  c_fresh_by_cell: dict[str, float], *, channels: str,
                  v_low: float, v_high: float, points: int
                  ) -> tuple[list[SampleMatrix], list[tuple[str, int, str]]]:
    """Build samples for a whole fleet, carrying pulse resistance forward.

    Returns (samples, skipped) where skipped lists (cell, cycle, reason)
    for cycles whose window could not be extracted.
    """
    samples: list[SampleMatrix] = []
    skipped: list[tuple[str, int, str]] = []
    for cell_id, records in records_by_cell.items():
        c_fresh = c_fresh_by_cell[cell_id]
        r_in: float | None = None
        for record in sorted(records, key=lambda r: r.cycle):
            if record.hppc is not None:
                r_in = internal_resistance(*record.hppc)
            try:
                sample = build_sample(
                    record, channels=channels, v_low=v_low, v_high=v_high,
                    points=points, c_fresh_ah=c_fresh, r_in=r_in)
            except CoverageError as exc:
                skipped.append((cell_id, record.cycle, str(exc)))
                continue
            sample.cell_id = cell_id
            samples.append(sample)
    if not samples:
        raise ConfigError("no usable cycles: every window extraction failed")
    return samples, skipped


# ----------------------------------------------------------------------
# splits
# ----------------------------------------------------------------------
def split_dataset(samples: list[SampleMatrix],
                  plan: SplitPlan) -> dict[str, np.ndarray]:
    """Assign sample indices to the five split sets.

    Source cells: a seeded uniform-random train_ratio fraction becomes the
    training pool, 20% of which is carved off for validation; the rest is
    the source test set. Target cells contribute their lowest
    `target_train_cycles` cycle indices to target train, remainder to
    target test. Counts use floor rounding.
    """
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([plan.seed])))
    source_idx = [i for i, s in enumerate(samples) if s.cell_id in plan.source_cells]
    perm = rng.permutation(len(source_idx))
    n_train = int(np.floor(plan.train_ratio * len(source_idx)))
    n_val = int(np.floor(0.2 * n_train))
    pool = [source_idx[j] for j in perm]
    splits = {
        "source_val": np.sort(np.array(pool[:n_val], dtype=np.int64)),
        "source_train": np.sort(np.array(pool[n_val:n_train], dtype=np.int64)),
        "source_test": np.sort(np.array(pool[n_train:], dtype=np.int64)),
    }
    target_train: list[int] = []
    target_test: list[int] = []
    for cell in plan.target_cells:
        cell_idx = [i for i, s in enumerate(samples) if s.cell_id == cell]
        cell_idx.sort(key=lambda i: samples[i].cycle)
        target_train.extend(cell_idx[: plan.target_train_cycles])
        target_test.extend(cell_idx[plan.target_train_cycles:])
    splits["target_train"] = np.array(sorted(target_train), dtype=np.int64)
    splits["target_test"] = np.array(sorted(target_test), dtype=np.int64)
    for name in SPLIT_NAMES:
        if splits[name].size == 0:
            raise ConfigError(f"split {name!r} came out empty")
    return splits


# ----------------------------------------------------------------------
# scaling
# ----------------------------------------------------------------------
class ChannelMinMaxScaler:
    """Per-channel affine map to [0, 1] fitted on training samples only.

    Operates on (n_samples, channels, points) stacks; min/max are taken
    over samples and points per channel. Transforming does not clamp, so
    unseen data may land outside [0, 1].
    """

    def __init__(self):
        self.data_min_: np.ndarray | None = None
        self.data_max_: np.ndarray | None = None

    def fit(self, x: np.ndarray) -> "ChannelMinMaxScaler":
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[0] == 0:
            raise ConfigError("scaler must be fitted on a non-empty (n, F, L) array")
        self.data_min_ = x.min(axis=(0, 2))
        self.data_max_ = x.max(axis=(0, 2))
        flat = self.data_max_ == self.data_min_
        if np.any(flat):
            warnings.warn(
                f"channels {np.nonzero(flat)[0].tolist()} are constant on the "
                "training data; mapping them to 0.5", stacklevel=2)
        return self

    def _check_fitted(self) -> None:
        if self.data_min_ is None:
            raise ConfigError("scaler is not fitted")

    def _span(self) -> np.ndarray:
        span = self.data_max_ - self.data_min_
        return np.where(span == 0.0, 1.0, span)

    def transform(self, x: np.ndarray) -> np.ndarray:
        self._check_fitted()
        x = np.asarray(x, dtype=np.float64)
        lo = self.data_min_[:, None]
        out = (x - lo) / self._span()[:, None]
        flat = (self.data_max_ == self.data_min_)
        if np.any(flat):
            out[..., flat, :] = 0.5
        return out

    def inverse_transform(self, x: np.ndarray) -> np.ndarray:
        self._check_fitted()
        x = np.asarray(x, dtype=np.float64)
        return x * self._span()[:, None] + self.data_min_[:, None]

    def to_dict(self) -> dict:
        self._check_fitted()
        return {"min": self.data_min_.tolist(), "max": self.data_max_.tolist()}

    @classmethod
    def from_dict(cls, payload: dict) -> "ChannelMinMaxScaler":
        scaler = cls()
        scaler.data_min_ = np.asarray(payload["min"], dtype=np.float64)
        scaler.data_max_ = np.asarray(payload["max"], dtype=np.float64)
        return scaler


# ----------------------------------------------------------------------
# dataset files
# ----------------------------------------------------------------------
@dataclass
class Dataset:
    """A preprocessed dataset: raw sample stack plus split bookkeeping."""
    x: np.ndarray                    # (n, F, L) unscaled
    y: np.ndarray                    # (n,)
    cells: list[str]
    cycles: np.ndarray               # (n,)
    channels: tuple[str, ...]
    points: int
    v_low: float
    v_high: float
    splits: dict[str, np.ndarray]
    scaler: ChannelMinMaxScaler
    plan: SplitPlan
    seed: int

    def split_arrays(self, name: str, scaled: bool = True
                     ) -> tuple[np.ndarray, np.ndarray]:
        idx = self.splits[name]
        x = self.x[idx]
        if scaled:
            x = self.scaler.transform(x)
        return x, self.y[idx]

    def split_meta(self, name: str) -> tuple[list[str], np.ndarray]:
        idx = self.splits[name]
        return [self.cells[i] for i in idx], self.cycles[idx]


def assemble_dataset(samples: list[SampleMatrix], plan: SplitPlan, *,
                     v_low: float, v_high: float, seed: int) -> Dataset:
    """Stack samples, compute splits and fit the scaler on source train."""
    x = np.stack([s.x for s in samples]).astype(np.float64)
    y = np.array([s.y for s in samples], dtype=np.float64)
    splits = split_dataset(samples, plan)
    scaler = ChannelMinMaxScaler().fit(x[splits["source_train"]])
    return Dataset(
        x=x, y=y,
        cells=[s.cell_id for s in samples],
        cycles=np.array([s.cycle for s in samples], dtype=np.int64),
        channels=samples[0].channels,
        points=x.shape[2], v_low=v_low, v_high=v_high,
        splits=splits, scaler=scaler, plan=plan, seed=seed)


def save_dataset(dataset: Dataset, out_dir: str | Path) -> None:
    """Write the float32 sample blob and its JSON index."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    blob = dataset.x.astype("<f4")
    blob.tofile(out / BLOB_NAME)
    sample_bytes = dataset.x.shape[1] * dataset.x.shape[2] * 4
    index = {
        "format_version": INDEX_VERSION,
        "blob": BLOB_NAME,
        "points": int(dataset.points),
        "channels": list(dataset.channels),
        "v_low": dataset.v_low,
        "v_high": dataset.v_high,
        "seed": dataset.seed,
        "split_plan": asdict(dataset.plan),
        "splits": {k: v.tolist() for k, v in dataset.splits.items()},
        "scaler": dataset.scaler.to_dict(),
        "samples": [
            {"cell": cell, "cycle": int(cycle), "y": float(y),
             "offset": i * sample_bytes}
            for i, (cell, cycle, y) in enumerate(
                zip(dataset.cells, dataset.cycles, dataset.y))
        ],
    }
    (out / INDEX_NAME).write_text(
        json.dumps(index, indent=2, sort_keys=True) + "\n")


def load_dataset(in_dir: str | Path) -> Dataset:
    """Read a dataset written by save_dataset."""
    root = Path(in_dir)
    index_path = root / INDEX_NAME
    if not index_path.exists():
        raise FormatError(f"no dataset index at {index_path}")
    index = json.loads(index_path.read_text())
    if index.get("format_version") != INDEX_VERSION:
        raise FormatError(
            f"unsupported dataset index version {index.get('format_version')}")
    n = len(index["samples"])
    f = len(index["channels"])
    lv = index["points"]
    raw = np.fromfile(root / index["blob"], dtype="<f4")
    if raw.size != n * f * lv:
        raise FormatError(
            f"blob holds {raw.size} floats, index expects {n * f * lv}")
    plan_payload = dict(index["split_plan"])
    plan_payload["source_cells"] = tuple(plan_payload["source_cells"])
    plan_payload["target_cells"] = tuple(plan_payload["target_cells"])
    plan = SplitPlan(**plan_payload)
    return Dataset(
        x=raw.reshape(n, f, lv).astype(np.float64),
        y=np.array([s["y"] for s in index["samples"]], dtype=np.float64),
        cells=[s["cell"] for s in index["samples"]],
        cycles=np.array([s["cycle"] for s in index["samples"]], dtype=np.int64),
        channels=tuple(index["channels"]),
        points=lv, v_low=index["v_low"], v_high=index["v_high"],
        splits={k: np.asarray(v, dtype=np.int64)
                for k, v in index["splits"].items()},
        scaler=ChannelMinMaxScaler.from_dict(index["scaler"]),
        plan=plan, seed=index["seed"])
