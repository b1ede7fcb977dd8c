"""Synthetic CC-CV aging fleet generator.

Stands in for a confidential cycling dataset: a small equivalent-circuit
cell model (OCV polynomial + ohmic resistance + first-order thermal lag)
is cycled through charge / hold / rest / discharge at twelve working
conditions that differ in charge and discharge rate. Capacity fade and
resistance growth follow power laws in the cycle index, both scaled by
condition harshness, so deep-aged fleets with per-cycle ground-truth
labels can be produced deterministically from a seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Iterator

import numpy as np
import pandas as pd

from .errors import ConfigError, FormatError, SimulationError

MANIFEST_VERSION = 1
MANIFEST_NAME = "fleet.json"

# open-circuit voltage polynomial, ascending coefficients over soc in [0, 1];
# strictly increasing (derivative = 72*(s-0.5)^4 + 0.3), spans 3.0..4.2 V
OCV_COEFFS = (3.0, 4.8, -18.0, 36.0, -36.0, 14.4)

SOH_FLOOR = 0.15
REST_SECONDS = 3600.0
REST_DT = 60.0          # rest is quiescent; sampled coarser than active steps
CV_TIMEOUT_S = 36000.0  # 10 h

# thermal model: T' = (T_amb - T)/tau + (r_th/tau) * I^2 * R
THERMAL_R_TH = 20.0     # K/W
THERMAL_TAU = 600.0     # s
POLARIZATION_F = 150000.0  # CV decay time constant = R_aged * POLARIZATION_F

STEP_CC = "cc"
STEP_CV = "cv"
STEP_REST = "rest"
STEP_DIS = "dis"
CSV_COLUMNS = ("cycle", "step", "time_s", "current_A", "voltage_V", "temp_C")


@dataclass(frozen=True)
class CellCondition:
    """One cell's working condition and degradation parameters.

    Rates are C-rates relative to the fresh capacity; fade follows
    1 - alpha*k^beta (floored) and resistance grows by 1 + gamma*k^delta.
    """
    cell_id: str
    charge_rate: float
    discharge_rate: float
    ambient_temp_c: float = 25.0
    v_max: float = 4.2
    v_min: float = 3.0
    i_min_a: float = 0.096
    c_fresh_ah: float = 4.8
    r_fresh_ohm: float = 0.003
    fade_alpha: float = 0.0
    fade_beta: float = 0.85
    res_gamma: float = 0.0
    res_delta: float = 0.85
    ocv_warp: float = 1.0
    noise_v: float = 0.002
    noise_i: float = 0.010
    noise_t: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not self.v_min < self.v_max:
            raise ConfigError("condition requires v_min < v_max")
        if self.charge_rate <= 0 or self.discharge_rate <= 0:
            raise ConfigError("charge/discharge rates must be positive")
        if self.c_fresh_ah <= 0:
            raise ConfigError("fresh capacity must be positive")
        if self.fade_alpha < 0 or self.res_gamma < 0:
            raise ConfigError("fade_alpha and res_gamma must be >= 0")
        if self.fade_beta <= 0 or self.res_delta <= 0:
            raise ConfigError("fade_beta and res_delta must be > 0")
        if not 0.0 <= self.ocv_warp <= 1.0:
            raise ConfigError("ocv_warp must be in [0, 1]")

    @property
    def charge_current_a(self) -> float:
        return self.charge_rate * self.c_fresh_ah

    @property
    def discharge_current_a(self) -> float:
        return self.discharge_rate * self.c_fresh_ah


@dataclass
class StepSeries:
    """Uniformly recorded samples for one protocol step."""
    time_s: np.ndarray
    current_a: np.ndarray
    voltage_v: np.ndarray
    temp_c: np.ndarray

    def __post_init__(self):
        if not np.all(np.diff(self.time_s) > 0):
            raise SimulationError("step time axis must be strictly increasing")


@dataclass
class CycleRecord:
    """One full charge/rest/discharge cycle at cycle index `cycle`."""
    cycle: int
    cc_charge: StepSeries
    cv_charge: StepSeries
    rest: StepSeries
    discharge: StepSeries
    discharge_capacity_ah: float
    hppc: tuple[float, float] | None = None  # (delta_v, delta_i)

    def steps(self) -> list[tuple[str, StepSeries]]:
        return [(STEP_CC, self.cc_charge), (STEP_CV, self.cv_charge),
                (STEP_REST, self.rest), (STEP_DIS, self.discharge)]


@dataclass
class FleetDataset:
    """In-memory fleet: conditions plus ordered cycle records per cell."""
    conditions: list[CellCondition]
    cycles: dict[str, list[CycleRecord]]
    capacity_test_interval: int = 50


# (charge, discharge) C-rate per cell; cells 02 and 07 sit outside the
# harshness range the other ten span, mirroring a fleet where the target
# task cells run under working conditions the source cells never saw
DEFAULT_RATE_PAIRS = (
    (0.4, 0.4), (0.3, 0.3), (0.4, 1.0), (0.6, 0.4), (0.6, 0.7), (0.6, 1.0),
    (1.1, 1.1), (0.8, 0.7), (0.8, 1.0), (1.0, 0.4), (1.0, 0.7), (1.0, 1.0),
)


@dataclass(frozen=True)
class FleetConfig:
    """Knobs for fleet generation; defaults give the 12-condition grid."""
    seed: int = 0
    cells: int = 12
    max_cycles: int = 200
    cycle_stride: int = 5
    capacity_test_interval: int = 50
    dt_s: float = 1.0
    noise: bool = True
    ambient_temp_c: float = 25.0
    rate_pairs: tuple[tuple[float, float], ...] = DEFAULT_RATE_PAIRS
    fade_alpha_per_rate: float = 2.4e-3
    fade_beta: float = 0.85
    res_gamma_per_rate: float = 1.0e-3
    res_delta: float = 0.85
    c_fresh_ah: float = 4.8
    r_fresh_ohm: float = 0.003
    hppc_pulse_rate: float = 1.0
    hppc_pulse_s: float = 10.0

    def __post_init__(self):
        if self.cells < 1 or self.cells > len(self.rate_pairs):
            raise ConfigError(f"cells must be in 1..{len(self.rate_pairs)}")
        if self.max_cycles < 0 or self.cycle_stride < 1:
            raise ConfigError("max_cycles must be >= 0 and cycle_stride >= 1")
        if self.capacity_test_interval % self.cycle_stride != 0:
            raise ConfigError(
                "capacity_test_interval must be a multiple of cycle_stride")
        if self.dt_s <= 0:
            raise ConfigError("dt_s must be positive")


# ----------------------------------------------------------------------
# cell physics
# ----------------------------------------------------------------------
def ocv(soc) -> np.ndarray | float:
    """Open-circuit voltage for soc in [0, 1] (strictly increasing)."""
    s = np.asarray(soc, dtype=np.float64)
    if np.any(s < 0.0) or np.any(s > 1.0):
        raise ValueError("soc outside [0, 1]")
    v = np.zeros_like(s)
    for c in reversed(OCV_COEFFS):
        v = v * s + c
    return float(v) if np.isscalar(soc) or s.ndim == 0 else v


def ocv_inverse(voltage: float) -> float:
    """Invert the OCV polynomial by bisection on [0, 1]."""
    lo_v, hi_v = OCV_COEFFS[0], float(ocv(1.0))
    if not lo_v <= voltage <= hi_v:
        raise ValueError(f"voltage {voltage} outside OCV range [{lo_v}, {hi_v}]")
    lo, hi = 0.0, 1.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if float(ocv(mid)) < voltage:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def aged_state(cond: CellCondition, k: int) -> tuple[float, float]:
    """(aged capacity Ah, aged resistance ohm) at cycle index k."""
    if k < 0:
        raise ValueError("cycle index must be >= 0")
    fade = max(SOH_FLOOR, 1.0 - cond.fade_alpha * float(k) ** cond.fade_beta)
    c_aged = cond.c_fresh_ah * fade
    r_aged = cond.r_fresh_ohm * (1.0 + cond.res_gamma * float(k) ** cond.res_delta)
    return c_aged, r_aged


def _soc_warp(soc, w: float):
    """Aging deformation of the OCV interior; soc endpoints stay fixed.

    Mimics the electrode-slippage curve shift of aged cells: the voltage
    profile bends upward in the interior while 0 and 1 still map to the
    fresh curve's ends, so protocol cutoffs are unaffected. Strictly
    increasing for w < 1.
    """
    return soc + w * soc * (1.0 - soc)


def _soc_warp_inverse(u: float, w: float) -> float:
    if w < 1e-12:
        return u
    disc = (1.0 + w) ** 2 - 4.0 * w * u
    return ((1.0 + w) - math.sqrt(disc)) / (2.0 * w)


def _grid(duration: float, dt: float) -> np.ndarray:
    """Sample times 0..duration at step dt, final point exactly at duration."""
    if duration <= 0:
        raise SimulationError(f"non-positive step duration {duration}")
    n = int(math.floor(duration / dt))
    t = np.arange(n + 1, dtype=np.float64) * dt
    if t[-1] < duration - 1e-9:
        t = np.append(t, duration)
    return t

def _temp_const_power(t: np.ndarray, temp0: float, t_amb: float,
                      power_w: float) -> np.ndarray:
    t_ss = t_amb + THERMAL_R_TH * power_w
    return t_ss + (temp0 - t_ss) * np.exp(-t / THERMAL_TAU)


def _temp_decaying_power(t: np.ndarray, temp0: float, t_amb: float,
                         peak_power_w: float, decay_tau: float) -> np.ndarray:
    # linear ODE with source decaying at rate 2/decay_tau (power ~ I^2)
    lam = 2.0 / decay_tau
    c = THERMAL_R_TH * peak_power_w / THERMAL_TAU
    u0 = temp0 - t_amb
    denom = 1.0 / THERMAL_TAU - lam
    if abs(denom) < 1e-12:
        forced = c * t * np.exp(-t / THERMAL_TAU)
    else:
        forced = c * (np.exp(-lam * t) - np.exp(-t / THERMAL_TAU)) / denom
    return t_amb + u0 * np.exp(-t / THERMAL_TAU) + forced


def _apply_noise(series: StepSeries, cond: CellCondition,
                 rng: np.random.Generator) -> None:
    n = series.time_s.size
    if cond.noise_v > 0:
        series.voltage_v = series.voltage_v + rng.normal(0.0, cond.noise_v, n)
    if cond.noise_i > 0:
        series.current_a = series.current_a + rng.normal(0.0, cond.noise_i, n)
    if cond.noise_t > 0:
        series.temp_c = series.temp_c + rng.normal(0.0, cond.noise_t, n)


def cycle_rng(cond: CellCondition, k: int) -> np.random.Generator:
    """Counter-based stream keyed by (condition seed, cycle index)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([cond.seed, k])))


def simulate_cycle(cond: CellCondition, k: int, dt: float = 1.0,
                   rng: np.random.Generator | None = None,
                   noise: bool = True) -> CycleRecord:
    """Simulate one CC-CV charge / rest / CC discharge cycle at index k.

    The cycle starts from the residual state the previous discharge left
    behind (self-consistent under the fixed protocol), so cycles can be
    generated independently and in any order.
    """
    if dt <= 0:
        raise ConfigError("dt must be positive")
    c_aged, r_aged = aged_state(cond, k)
    if rng is None:
        rng = cycle_rng(cond, k)
    i_cc = cond.charge_current_a
    i_dis = cond.discharge_current_a
    t_amb = cond.ambient_temp_c
    warp = cond.ocv_warp * (1.0 - c_aged / cond.c_fresh_ah)

    # residual state after the preceding discharge hit v_min
    soc0 = _soc_warp_inverse(ocv_inverse(cond.v_min + i_dis * r_aged), warp)
    temp0 = t_amb + THERMAL_R_TH * i_dis ** 2 * r_aged

    # CC charge until the terminal voltage reaches v_max
    soc_cc_end = _soc_warp_inverse(ocv_inverse(cond.v_max - i_cc * r_aged), warp)
    cc_dur = (soc_cc_end - soc0) * 3600.0 * c_aged / i_cc
    t = _grid(cc_dur, dt)
    soc = soc0 + i_cc * t / (3600.0 * c_aged)
    cc = StepSeries(
        time_s=t,
        current_a=np.full(t.size, i_cc),
        voltage_v=ocv(_soc_warp(soc, warp)) + i_cc * r_aged,
        temp_c=_temp_const_power(t, temp0, t_amb, i_cc ** 2 * r_aged),
    )
    cc_end_t, cc_end_temp = t[-1], cc.temp_c[-1]

    # CV hold at v_max with exponential current decay down to i_min
    tau_cv = r_aged * POLARIZATION_F
    cv_dur = tau_cv * math.log(i_cc / cond.i_min_a)
    if cv_dur > CV_TIMEOUT_S:
        raise SimulationError(
            f"CV decay did not converge within 10 h (needs {cv_dur:.0f} s)")
    t = _grid(cv_dur, dt)
    i_cv = i_cc * np.exp(-t / tau_cv)
    soc_cv = np.minimum(
        1.0, soc_cc_end + i_cc * tau_cv * (1.0 - np.exp(-t / tau_cv)) / (3600.0 * c_aged))
    cv = StepSeries(
        time_s=cc_end_t + t,
        current_a=i_cv,
        voltage_v=np.full(t.size, cond.v_max),
        temp_c=_temp_decaying_power(t, cc_end_temp, t_amb,
                                    i_cc ** 2 * r_aged, tau_cv),
    )
    cv_end_t, cv_end_temp = cv.time_s[-1], cv.temp_c[-1]
    soc_full = float(soc_cv[-1])

    # one-hour rest; quiescent, so sampled coarsely
    t = _grid(REST_SECONDS, REST_DT)
    rest = StepSeries(
        time_s=cv_end_t + t,
        current_a=np.zeros(t.size),
        voltage_v=np.full(t.size, float(ocv(_soc_warp(soc_full, warp)))),
        temp_c=_temp_const_power(t, cv_end_temp, t_amb, 0.0),
    )
    rest_end_t, rest_end_temp = rest.time_s[-1], rest.temp_c[-1]

    # CC discharge until the terminal voltage reaches v_min
    soc_dis_end = _soc_warp_inverse(ocv_inverse(cond.v_min + i_dis * r_aged),
                                    warp)
    dis_dur = (soc_full - soc_dis_end) * 3600.0 * c_aged / i_dis
    t = _grid(dis_dur, dt)
    soc = soc_full - i_dis * t / (3600.0 * c_aged)
    dis = StepSeries(
        time_s=rest_end_t + t,
        current_a=np.full(t.size, i_dis),
        voltage_v=ocv(_soc_warp(soc, warp)) - i_dis * r_aged,
        temp_c=_temp_const_power(t, rest_end_temp, t_amb,
                                 i_dis ** 2 * r_aged),
    )

    if noise:
        for series in (cc, cv, rest, dis):
            _apply_noise(series, cond, rng)

    capacity = float(np.trapezoid(dis.current_a, dis.time_s) / 3600.0)
    if not 0.0 < capacity <= cond.c_fresh_ah * 1.02:
        raise SimulationError(
            f"discharge capacity {capacity:.4f} Ah outside (0, 1.02*C_fresh]")
    return CycleRecord(cycle=k, cc_charge=cc, cv_charge=cv, rest=rest,
                       discharge=dis, discharge_capacity_ah=capacity)


def hppc_pulse(cond: CellCondition, k: int, pulse_i: float, pulse_s: float,
               rng: np.random.Generator | None = None,
               noise: bool = True) -> tuple[float, float]:
    """Current pulse response: (voltage change, current change)."""
    if pulse_i <= 0:
        raise ConfigError("HPPC pulse current must be positive")
    if pulse_s <= 0:
        raise ConfigError("HPPC pulse duration must be positive")
    _, r_aged = aged_state(cond, k)
    dv = pulse_i * r_aged
    if noise and cond.noise_v > 0:
        if rng is None:
            rng = cycle_rng(cond, k)
        dv += rng.normal(0.0, cond.noise_v)
    return float(dv), float(pulse_i)


# ----------------------------------------------------------------------
# fleet assembly
# ----------------------------------------------------------------------
def default_conditions(cfg: FleetConfig) -> list[CellCondition]:
    """Build the condition set: shared climate, distinct (I_c, I_d)."""
    conditions = []
    for idx, (ic, idr) in enumerate(cfg.rate_pairs[: cfg.cells]):
        harshness = ic + idr
        cond_seed = int(np.random.SeedSequence([cfg.seed, idx]).generate_state(1)[0])
        conditions.append(CellCondition(
            cell_id=f"cell_{idx + 1:02d}",
            charge_rate=ic,
            discharge_rate=idr,
            ambient_temp_c=cfg.ambient_temp_c,
            c_fresh_ah=cfg.c_fresh_ah,
            r_fresh_ohm=cfg.r_fresh_ohm,
            fade_alpha=cfg.fade_alpha_per_rate * harshness,
            fade_beta=cfg.fade_beta,
            res_gamma=cfg.res_gamma_per_rate * harshness,
            res_delta=cfg.res_delta,
            seed=cond_seed,
        ))
    return conditions


def _validate_conditions(conditions: list[CellCondition]) -> None:
    if not conditions:
        raise ConfigError("fleet needs at least one condition")
    ids = [c.cell_id for c in conditions]
    if len(set(ids)) != len(ids):
        raise ConfigError("cell ids must be unique")
    ref = conditions[0]
    for c in conditions[1:]:
        if (c.ambient_temp_c, c.v_max, c.v_min) != (ref.ambient_temp_c, ref.v_max, ref.v_min):
            raise ConfigError("all conditions must share T_c, v_max and v_min")
    rates = [(c.charge_rate, c.discharge_rate) for c in conditions]
    if len(set(rates)) != len(rates):
        raise ConfigError("conditions must differ in (charge, discharge) rates")


def recorded_cycles(cond: CellCondition, max_cycles: int, stride: int) -> list[int]:
    """Cycle indices recorded for a cell: fresh to SOH floor or the cap."""
    ks = []
    for k in range(0, max_cycles + 1, stride):
        if 1.0 - cond.fade_alpha * float(k) ** cond.fade_beta <= SOH_FLOOR:
            break
        ks.append(k)
    return ks


def iter_cell_records(cond: CellCondition, cfg: FleetConfig) -> Iterator[CycleRecord]:
    """Generate a cell's cycle records, attaching HPPC at capacity tests."""
    pulse_i = cfg.hppc_pulse_rate * cond.c_fresh_ah
    for k in recorded_cycles(cond, cfg.max_cycles, cfg.cycle_stride):
        rng = cycle_rng(cond, k)
        record = simulate_cycle(cond, k, dt=cfg.dt_s, rng=rng, noise=cfg.noise)
        if k % cfg.capacity_test_interval == 0:
            record.hppc = hppc_pulse(cond, k, pulse_i, cfg.hppc_pulse_s,
                                     rng=rng, noise=cfg.noise)
        yield record


def generate_fleet(cfg: FleetConfig,
                   conditions: list[CellCondition] | None = None) -> FleetDataset:
    """Materialize the whole fleet in memory (use write_fleet for files)."""
    if conditions is None:
        conditions = default_conditions(cfg)
    _validate_conditions(conditions)
    cycles = {cond.cell_id: list(iter_cell_records(cond, cfg))
              for cond in conditions}
    return FleetDataset(conditions=conditions, cycles=cycles,
                        capacity_test_interval=cfg.capacity_test_interval)


# ----------------------------------------------------------------------
# file formats
# ----------------------------------------------------------------------
def _record_frame(record: CycleRecord) -> pd.DataFrame:
    parts = []
    for step_name, series in record.steps():
        parts.append(pd.DataFrame({
            "cycle": np.full(series.time_s.size, record.cycle, dtype=np.int64),
            "step": step_name,
            "time_s": series.time_s,
            "current_A": series.current_a,
            "voltage_V": series.voltage_v,
            "temp_C": series.temp_c,
        }))
    return pd.concat(parts, ignore_index=True)


def write_fleet(cfg: FleetConfig, out_dir: str | Path,
                conditions: list[CellCondition] | None = None) -> dict:
    """Stream the fleet to one CSV per cell plus a JSON manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if conditions is None:
        conditions = default_conditions(cfg)
    _validate_conditions(conditions)

    cells_meta: dict[str, dict] = {}
    for cond in conditions:
        frames = []
        meta = {"cycles": [], "discharge_capacity_ah": {},
                "capacity_test_cycles": [], "hppc": {}}
        for record in iter_cell_records(cond, cfg):
            frames.append(_record_frame(record))
            meta["cycles"].append(record.cycle)
            meta["discharge_capacity_ah"][str(record.cycle)] = record.discharge_capacity_ah
            if record.hppc is not None:
                meta["capacity_test_cycles"].append(record.cycle)
                meta["hppc"][str(record.cycle)] = {
                    "delta_v": record.hppc[0], "delta_i": record.hppc[1]}
        frame = pd.concat(frames, ignore_index=True)
        frame.to_csv(out / f"{cond.cell_id}.csv", index=False,
                     float_format="%.6f")
        cells_meta[cond.cell_id] = meta

    manifest = {
        "format_version": MANIFEST_VERSION,
        "seed": cfg.seed,
        "dt_s": cfg.dt_s,
        "noise": cfg.noise,
        "capacity_test_interval": cfg.capacity_test_interval,
        "cycle_stride": cfg.cycle_stride,
        "max_cycles": cfg.max_cycles,
        "hppc_pulse_s": cfg.hppc_pulse_s,
        "hppc_pulse_rate": cfg.hppc_pulse_rate,
        "ocv_coeffs": list(OCV_COEFFS),
        "conditions": [asdict(c) for c in conditions],
        "cells": cells_meta,
    }
    (out / MANIFEST_NAME).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def load_manifest(fleet_dir: str | Path) -> dict:
    path = Path(fleet_dir) / MANIFEST_NAME
    if not path.exists():
        raise FormatError(f"no fleet manifest at {path}")
    manifest = json.loads(path.read_text())
    if manifest.get("format_version") != MANIFEST_VERSION:
        raise FormatError(
            f"unsupported fleet manifest version {manifest.get('format_version')}")
    return manifest


def load_cell_records(fleet_dir: str | Path, cell_id: str,
                      manifest: dict) -> list[CycleRecord]:
    """Rebuild a cell's cycle records from its CSV plus the manifest."""
    path = Path(fleet_dir) / f"{cell_id}.csv"
    if not path.exists():
        raise FormatError(f"missing cell file {path}")
    frame = pd.read_csv(path)
    missing = set(CSV_COLUMNS) - set(frame.columns)
    if missing:
        raise FormatError(f"{path} lacks columns {sorted(missing)}")
    meta = manifest["cells"][cell_id]
    records = []
    for cycle, group in frame.groupby("cycle", sort=True):
        series = {}
        for step_name in (STEP_CC, STEP_CV, STEP_REST, STEP_DIS):
            rows = group[group["step"] == step_name]
            if rows.empty:
                raise FormatError(
                    f"{path}: cycle {cycle} lacks step {step_name!r}")
            series[step_name] = StepSeries(
                time_s=rows["time_s"].to_numpy(float),
                current_a=rows["current_A"].to_numpy(float),
                voltage_v=rows["voltage_V"].to_numpy(float),
                temp_c=rows["temp_C"].to_numpy(float),
            )
        hppc_entry = meta["hppc"].get(str(cycle))
        records.append(CycleRecord(
            cycle=int(cycle),
            cc_charge=series[STEP_CC],
            cv_charge=series[STEP_CV],
            rest=series[STEP_REST],
            discharge=series[STEP_DIS],
            discharge_capacity_ah=float(meta["discharge_capacity_ah"][str(cycle)]),
            hppc=None if hppc_entry is None else (
                float(hppc_entry["delta_v"]), float(hppc_entry["delta_i"])),
        ))
    return records


def conditions_from_manifest(manifest: dict) -> list[CellCondition]:
    return [CellCondition(**entry) for entry in manifest["conditions"]]
