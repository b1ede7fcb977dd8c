"""Command line pipeline: generate, preprocess, train, transfer, evaluate, sweep.

Every subcommand resolves its settings as CLI flags over an optional JSON
config file over built-in defaults, then writes a run record
(run_record.json) with the fully resolved configuration so any run can be
reproduced by pointing --config at the record.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import metrics as mtr
from . import model as mdl
from . import preprocess as pp
from . import simulator as sim
from . import training as tr
from .errors import ConfigError, CoverageError, FormatError, SimulationError, TrainingError

RUN_RECORD_VERSION = 1
RUN_RECORD_NAME = "run_record.json"

DESK_MODEL = dict(s_patch=20, f_patch=2, d_embed=64, n_heads=4,
                  mlp_hidden=64, depth=2, fc_hidden=32, dropout=0.1)
PAPER_MODEL = dict(s_patch=20, f_patch=2, d_embed=512, n_heads=8,
                   mlp_hidden=512, depth=4, fc_hidden=32, dropout=0.1)
TRAIN_DEFAULTS = dict(learning_rate=1e-3, batch_size=16, max_epochs=5000,
                      patience=50, seed=0)

SWEEP_GRIDS = {
    "depth": [1, 2, 3, 4, 5, 6],
    "granularity": [100, 200, 300, 400, 500],
    "ratio": [0.1, 0.3, 0.5, 0.7, 0.9],
    "channels": ["raw", "supplementary"],
}


# ----------------------------------------------------------------------
# config plumbing
# ----------------------------------------------------------------------
def _load_config_file(path: str) -> dict:
    payload = json.loads(Path(path).read_text())
    if not isinstance(payload, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    if "subcommand" in payload and "config" in payload:
        payload = payload["config"]  # accept a prior run record
    return payload


def resolve_config(defaults: dict, args: argparse.Namespace) -> dict:
    """Merge defaults < config file < explicitly passed CLI flags."""
    cfg = dict(defaults)
    if getattr(args, "config", None):
        payload = _load_config_file(args.config)
        unknown = set(payload) - set(defaults)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(payload)
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    return cfg


def write_run_record(out_dir: Path, subcommand: str, config: dict,
                     outputs: list[str], elapsed_s: float,
                     extra: dict | None = None) -> None:
    record = {
        "format_version": RUN_RECORD_VERSION,
        "subcommand": subcommand,
        "config": config,
        "outputs": sorted(outputs),
        "elapsed_s": elapsed_s,
    }
    if extra:
        record.update(extra)
    (out_dir / RUN_RECORD_NAME).write_text(
        json.dumps(record, indent=2, sort_keys=True) + "\n")


def _validate_outputs(out_dir: Path, outputs: list[str]) -> None:
    """Exit-0 gate: every declared artifact exists and parses/validates."""
    for name in outputs:
        path = out_dir / name
        if not path.exists():
            raise FormatError(f"expected output {path} was not written")
        if path.suffix == ".json":
            json.loads(path.read_text())
    if (out_dir / pp.INDEX_NAME) in [out_dir / n for n in outputs]:
        pp.load_dataset(out_dir)
    if (out_dir / mdl.CHECKPOINT_NAME) in [out_dir / n for n in outputs]:
        mdl.load_checkpoint(out_dir)
    if (out_dir / sim.MANIFEST_NAME) in [out_dir / n for n in outputs]:
        sim.load_manifest(out_dir)




def _require_path(cfg: dict, key: str) -> str:
    value = cfg.get(key)
    if not value:
        raise ConfigError(f"--{key} is required (flag or config file)")
    return str(value)


# ----------------------------------------------------------------------
# generate
# ----------------------------------------------------------------------
def cmd_generate(args: argparse.Namespace) -> int:
    defaults = asdict(sim.FleetConfig())
    cfg = resolve_config(defaults, args)
    cfg["rate_pairs"] = tuple(tuple(pair) for pair in cfg["rate_pairs"])
    fleet_cfg = sim.FleetConfig(**cfg)
    out = Path(args.out)
    start = time.perf_counter()
    manifest = sim.write_fleet(fleet_cfg, out)
    outputs = [sim.MANIFEST_NAME] + [f"{c['cell_id']}.csv"
                                     for c in manifest["conditions"]]
    _validate_outputs(out, outputs)
    write_run_record(out, "generate", cfg, outputs,
                     time.perf_counter() - start)
    print(f"wrote {len(manifest['conditions'])} cell files to {out}")
    return 0


# ----------------------------------------------------------------------
# preprocess
# ----------------------------------------------------------------------
PREPROCESS_DEFAULTS = dict(
    fleet=None, channels="raw", v_low=3.4, v_high=4.0, lv=100, rt=0.7,
    target_cells="cell_02,cell_07", cycles=4, seed=0)


def _split_cells(value) -> tuple[str, ...]:
    if isinstance(value, (list, tuple)):
        return tuple(value)
    return tuple(c.strip() for c in str(value).split(",") if c.strip())


def _load_fleet_records(fleet_dir: str) -> tuple[dict, dict, dict]:
    manifest = sim.load_manifest(fleet_dir)
    conditions = sim.conditions_from_manifest(manifest)
    records = {c.cell_id: sim.load_cell_records(fleet_dir, c.cell_id, manifest)
               for c in conditions}
    c_fresh = {c.cell_id: c.c_fresh_ah for c in conditions}
    return manifest, records, c_fresh


def _build_dataset(records: dict, c_fresh: dict, cfg: dict,
                   verbose: bool = True) -> pp.Dataset:
    samples, skipped = pp.build_samples(
        records, c_fresh, channels=cfg["channels"], v_low=cfg["v_low"],
        v_high=cfg["v_high"], points=cfg["lv"])
    if verbose:
        for cell, cycle, reason in skipped:
            print(f"skipped {cell} cycle {cycle}: {reason}")
    target = _split_cells(cfg["target_cells"])
    all_cells = tuple(records.keys())
    missing = set(target) - set(all_cells)
    if missing:
        raise ConfigError(f"target cells not in fleet: {sorted(missing)}")
    source = tuple(c for c in all_cells if c not in target)
    plan = pp.SplitPlan(source_cells=source, target_cells=target,
                        train_ratio=cfg["rt"], target_train_cycles=cfg["cycles"],
                        seed=cfg["seed"])
    dataset = pp.assemble_dataset(samples, plan, v_low=cfg["v_low"],
                                  v_high=cfg["v_high"], seed=cfg["seed"])
    if verbose:
        counts = ", ".join(f"{k}={v.size}" for k, v in dataset.splits.items())
        print(f"samples={len(samples)} skipped={len(skipped)} [{counts}]")
    return dataset


def cmd_preprocess(args: argparse.Namespace) -> int:
    cfg = resolve_config(PREPROCESS_DEFAULTS, args)
    fleet_dir = _require_path(cfg, "fleet")
    cfg["fleet"] = fleet_dir
    start = time.perf_counter()
    _, records, c_fresh = _load_fleet_records(fleet_dir)
    dataset = _build_dataset(records, c_fresh, cfg)
    out = Path(args.out)
    pp.save_dataset(dataset, out)
    outputs = [pp.INDEX_NAME, pp.BLOB_NAME]
    _validate_outputs(out, outputs)
    write_run_record(out, "preprocess", cfg, outputs,
                     time.perf_counter() - start)
    return 0


# ----------------------------------------------------------------------
# train
# ----------------------------------------------------------------------
TRAIN_CMD_DEFAULTS = {"dataset": None, **DESK_MODEL, **TRAIN_DEFAULTS}


def _model_config_from(cfg: dict, channels: int, points: int) -> mdl.ViTConfig:
    return mdl.ViTConfig(
        points=points, channels=channels, s_patch=cfg["s_patch"],
        f_patch=cfg["f_patch"], d_embed=cfg["d_embed"], n_heads=cfg["n_heads"],
        mlp_hidden=cfg["mlp_hidden"], depth=cfg["depth"],
        fc_hidden=cfg["fc_hidden"], dropout=cfg["dropout"])


def _train_config_from(cfg: dict) -> tr.TrainConfig:
    return tr.TrainConfig(
        learning_rate=cfg["learning_rate"], batch_size=cfg["batch_size"],
        max_epochs=cfg["max_epochs"], patience=cfg["patience"],
        seed=cfg["seed"])


def cmd_train(args: argparse.Namespace) -> int:
    defaults = dict(TRAIN_CMD_DEFAULTS)
    if getattr(args, "paper_config", False):
        defaults.update(PAPER_MODEL)
    cfg = resolve_config(defaults, args)
    cfg["dataset"] = _require_path(cfg, "dataset")
    start = time.perf_counter()
    dataset = pp.load_dataset(cfg["dataset"])
    model_cfg = _model_config_from(cfg, len(dataset.channels), dataset.points)
    params = mdl.ModelParameters.initialize(model_cfg, seed=cfg["seed"])
    x_train, y_train = dataset.split_arrays("source_train")
    x_val, y_val = dataset.split_arrays("source_val")
    history = tr.train_model(params, x_train, y_train, x_val, y_val,
                             _train_config_from(cfg))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    mdl.save_checkpoint(params, out)
    history.to_csv(out / "history.csv")
    outputs = [mdl.CHECKPOINT_NAME, mdl.CHECKPOINT_BLOB, "history.csv"]
    _validate_outputs(out, outputs)
    write_run_record(
        out, "train", cfg, outputs,
        time.perf_counter() - start,
        extra={"stop_reason": history.stop_reason,
               "best_epoch": history.best_epoch,
               "best_val_rmspe": history.best_val,
               "epochs_run": len(history.train_loss)})
    print(f"stopped after {len(history.train_loss)} epochs "
          f"({history.stop_reason}); best val RMSPE "
          f"{history.best_val:.4f}% at epoch {history.best_epoch}")
    return 0


# ----------------------------------------------------------------------
# transfer
# ----------------------------------------------------------------------
TRANSFER_DEFAULTS = dict(dataset=None, checkpoint=None, epochs=20000,
                         cycles=None, learning_rate=1e-3, batch_size=16,
                         seed=0)


def _target_train_subset(dataset: pp.Dataset, cycles: int | None
                         ) -> np.ndarray:
    idx = dataset.splits["target_train"]
    if cycles is None:
        return idx
    per_cell: dict[str, list[int]] = {}
    for i in idx:
        per_cell.setdefault(dataset.cells[i], []).append(int(i))
    chosen: list[int] = []
    for cell, members in per_cell.items():
        members.sort(key=lambda i: int(dataset.cycles[i]))
        if cycles > len(members):
            raise ConfigError(
                f"requested first {cycles} cycles but {cell} only has "
                f"{len(members)} target-train cycles")
        chosen.extend(members[:cycles])
    return np.array(sorted(chosen), dtype=np.int64)


def cmd_transfer(args: argparse.Namespace) -> int:
    defaults = dict(TRANSFER_DEFAULTS)
    cfg = resolve_config(defaults, args)
    if getattr(args, "fast", False) and args.epochs is None:
        cfg["epochs"] = 2000
    cfg["dataset"] = _require_path(cfg, "dataset")
    cfg["checkpoint"] = _require_path(cfg, "checkpoint")
    start = time.perf_counter()
    dataset = pp.load_dataset(cfg["dataset"])
    params = mdl.load_checkpoint(cfg["checkpoint"])
    mdl.check_dataset_compatible(params.cfg, len(dataset.channels),
                                 dataset.points)
    idx = _target_train_subset(dataset, cfg["cycles"])
    x = dataset.scaler.transform(dataset.x[idx])
    y = dataset.y[idx]
    train_cfg = tr.TrainConfig(
        learning_rate=cfg["learning_rate"], batch_size=cfg["batch_size"],
        seed=cfg["seed"])
    history = tr.fine_tune(params, x, y, cfg["epochs"], train_cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    mdl.save_checkpoint(params, out)
    history.to_csv(out / "history.csv")
    outputs = [mdl.CHECKPOINT_NAME, mdl.CHECKPOINT_BLOB, "history.csv"]
    _validate_outputs(out, outputs)
    write_run_record(
        out, "transfer", cfg, outputs, time.perf_counter() - start,
        extra={"target_train_samples": int(idx.size)})
    print(f"fine-tuned head for {cfg['epochs']} epochs "
          f"on {idx.size} target cycles")
    return 0


# ----------------------------------------------------------------------
# evaluate
# ----------------------------------------------------------------------
EVALUATE_DEFAULTS = dict(dataset=None, checkpoint=None, split="source_test")


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = resolve_config(EVALUATE_DEFAULTS, args)
    if cfg["split"] not in pp.SPLIT_NAMES:
        raise ConfigError(f"unknown split {cfg['split']!r}")
    cfg["dataset"] = _require_path(cfg, "dataset")
    cfg["checkpoint"] = _require_path(cfg, "checkpoint")
    start = time.perf_counter()
    dataset = pp.load_dataset(cfg["dataset"])
    params = mdl.load_checkpoint(cfg["checkpoint"])
    mdl.check_dataset_compatible(params.cfg, len(dataset.channels),
                                 dataset.points)
    x, y = dataset.split_arrays(cfg["split"])
    cells, cycles = dataset.split_meta(cfg["split"])
    report = mtr.evaluate(params, x, y, cells, cycles)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.to_json(out / "report.json")
    report.to_csv(out / "report.csv")
    outputs = ["report.json", "report.csv"]
    _validate_outputs(out, outputs)
    write_run_record(
        out, "evaluate", cfg, outputs, time.perf_counter() - start)
    print(f"{cfg['split']}: RMSPE {report.rmspe_pct:.4f}%  "
          f"MAPE {report.mape_pct:.4f}%  SDE {report.sde_pct_points:.4f} "
          f"(m={report.m})")
    return 0


# ----------------------------------------------------------------------
# sweep
# ----------------------------------------------------------------------
SWEEP_DEFAULTS = dict(
    fleet=None, kind="depth", grid=None, repeats=10, seed=0,
    channels="supplementary", v_low=3.4, v_high=4.0, lv=200, rt=0.5,
    target_cells="cell_02,cell_07",
    **DESK_MODEL,
    learning_rate=1e-3, batch_size=16, max_epochs=300, patience=20)


def _parse_grid(kind: str, raw) -> list:
    if raw is None:
        return list(SWEEP_GRIDS[kind])
    if isinstance(raw, list):
        values = raw
    else:
        values = [v.strip() for v in str(raw).split(",") if v.strip()]
    if kind in ("depth", "granularity"):
        return [int(v) for v in values]
    if kind == "ratio":
        return [float(v) for v in values]
    return [str(v) for v in values]


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = resolve_config(SWEEP_DEFAULTS, args)
    kind = cfg["kind"]
    if kind not in SWEEP_GRIDS:
        raise ConfigError(f"unknown sweep kind {kind!r}")
    grid = _parse_grid(kind, cfg["grid"])
    if not grid:
        raise ConfigError("sweep grid is empty")
    if cfg["repeats"] < 1:
        raise ConfigError("repeats must be >= 1")
    cfg["fleet"] = _require_path(cfg, "fleet")
    start = time.perf_counter()
    _, records, c_fresh = _load_fleet_records(cfg["fleet"])
    target = _split_cells(cfg["target_cells"])
    source_cells = [c for c in records if c not in target]
    if not source_cells:
        raise ConfigError("no source cells left for the sweep")
    source_records = {c: records[c] for c in source_cells}

    sample_cache: dict[tuple[int, str], tuple[np.ndarray, np.ndarray]] = {}

    def source_arrays(lv: int, channels: str) -> tuple[np.ndarray, np.ndarray]:
        key = (lv, channels)
        if key not in sample_cache:
            samples, _ = pp.build_samples(
                source_records, c_fresh, channels=channels,
                v_low=cfg["v_low"], v_high=cfg["v_high"], points=lv)
            x = np.stack([s.x for s in samples])
            y = np.array([s.y for s in samples])
            sample_cache[key] = (x, y)
        return sample_cache[key]

    rows = []
    for value in grid:
        lv = value if kind == "granularity" else cfg["lv"]
        channels = value if kind == "channels" else cfg["channels"]
        ratio = value if kind == "ratio" else cfg["rt"]
        depth = value if kind == "depth" else cfg["depth"]
        for repeat in range(cfg["repeats"]):
            split_seed = int(np.random.SeedSequence(
                [cfg["seed"], repeat]).generate_state(1)[0])
            try:
                x, y = source_arrays(lv, channels)
                model_cfg = _model_config_from(
                    {**cfg, "depth": depth}, x.shape[1], lv)
                train_cfg = tr.TrainConfig(
                    learning_rate=cfg["learning_rate"],
                    batch_size=cfg["batch_size"],
                    max_epochs=cfg["max_epochs"], patience=cfg["patience"],
                    seed=split_seed)
                val_rmspe, test_rmspe = tr.random_split_run(
                    x, y, model_cfg, train_cfg, ratio, split_seed)
                rows.append((value, repeat, split_seed, val_rmspe,
                             test_rmspe, "ok"))
            except (ConfigError, CoverageError, TrainingError) as exc:
                rows.append((value, repeat, split_seed, "", "",
                             f"error: {exc}"))
            print(f"{kind}={value} repeat={repeat}: {rows[-1][-1]}"
                  + (f" test_rmspe={rows[-1][4]:.4f}%"
                     if rows[-1][-1] == "ok" else ""))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = [f"{kind},repeat,seed,val_rmspe,test_rmspe,status"]
    for value, repeat, split_seed, val_r, test_r, status in rows:
        val_s = repr(val_r) if val_r != "" else ""
        test_s = repr(test_r) if test_r != "" else ""
        lines.append(f"{value},{repeat},{split_seed},{val_s},{test_s},{status}")
    (out / "results.csv").write_text("\n".join(lines) + "\n")

    summary: dict = {"kind": kind, "repeats": cfg["repeats"], "values": {}}
    for value in grid:
        oks = [r[4] for r in rows if r[0] == value and r[5] == "ok"]
        entry: dict = {"n_ok": len(oks),
                       "n_failed": cfg["repeats"] - len(oks)}
        if oks:
            arr = np.array(oks)
            entry.update(mean=float(arr.mean()), std=float(arr.std()),
                         min=float(arr.min()),
                         q25=float(np.percentile(arr, 25)),
                         median=float(np.median(arr)),
                         q75=float(np.percentile(arr, 75)),
                         max=float(arr.max()))
        summary["values"][str(value)] = entry
    best = min((v for v in summary["values"].items() if "mean" in v[1]),
               key=lambda kv: kv[1]["mean"], default=None)
    summary["best_value"] = best[0] if best else None
    (out / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n")
    outputs = ["results.csv", "summary.json"]
    _validate_outputs(out, outputs)
    write_run_record(out, "sweep", {**cfg, "grid": grid},
                     outputs, time.perf_counter() - start)
    return 0


# ----------------------------------------------------------------------
# parser
# ----------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vitsoh",
        description="Synthetic battery aging data, transformer SOH "
                    "training, transfer learning and experiment sweeps.")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--config", type=str, default=None,
                       help="JSON config file or a previous run_record.json")
        p.add_argument("--out", type=str, required=True)

    p = sub.add_parser("generate", help="simulate the aging fleet to CSV")
    common(p)
    p.add_argument("--cells", type=int, default=None)
    p.add_argument("--max-cycles", dest="max_cycles", type=int, default=None)
    p.add_argument("--stride", dest="cycle_stride", type=int, default=None)
    p.add_argument("--dt", dest="dt_s", type=float, default=None)
    p.add_argument("--no-noise", dest="noise", action="store_const",
                   const=False, default=None)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("preprocess", help="build the model-ready dataset")
    common(p)
    p.add_argument("--fleet", type=str, default=None)
    p.add_argument("--channels", choices=["raw", "supplementary"], default=None)
    p.add_argument("--v-low", dest="v_low", type=float, default=None)
    p.add_argument("--v-high", dest="v_high", type=float, default=None)
    p.add_argument("--lv", type=int, default=None)
    p.add_argument("--rt", type=float, default=None)
    p.add_argument("--target-cells", dest="target_cells", type=str, default=None)
    p.add_argument("--cycles", type=int, default=None,
                   help="target-task training cycles per cell")
    p.set_defaults(func=cmd_preprocess)

    def model_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--s-patch", dest="s_patch", type=int, default=None)
        p.add_argument("--f-patch", dest="f_patch", type=int, default=None)
        p.add_argument("--d-embed", dest="d_embed", type=int, default=None)
        p.add_argument("--heads", dest="n_heads", type=int, default=None)
        p.add_argument("--mlp-hidden", dest="mlp_hidden", type=int, default=None)
        p.add_argument("--depth", type=int, default=None)
        p.add_argument("--fc-hidden", dest="fc_hidden", type=int, default=None)
        p.add_argument("--dropout", type=float, default=None)

    def train_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--lr", dest="learning_rate", type=float, default=None)
        p.add_argument("--batch", dest="batch_size", type=int, default=None)
        p.add_argument("--max-epochs", dest="max_epochs", type=int, default=None)
        p.add_argument("--patience", type=int, default=None)

    p = sub.add_parser("train", help="train on the source task")
    common(p)
    p.add_argument("--dataset", type=str, default=None)
    model_flags(p)
    train_flags(p)
    p.add_argument("--paper-config", dest="paper_config", action="store_true",
                   help="use the full-size published configuration")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("transfer", help="fine-tune the head on target cycles")
    common(p)
    p.add_argument("--dataset", type=str, default=None)
    p.add_argument("--checkpoint", type=str, default=None)
    p.add_argument("--cycles", type=int, default=None,
                   help="use only the first N target-train cycles per cell")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--fast", action="store_true",
                   help="2000 fine-tune epochs instead of 20000")
    p.add_argument("--lr", dest="learning_rate", type=float, default=None)
    p.add_argument("--batch", dest="batch_size", type=int, default=None)
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("evaluate", help="score a checkpoint on a split")
    common(p)
    p.add_argument("--dataset", type=str, default=None)
    p.add_argument("--checkpoint", type=str, default=None)
    p.add_argument("--split", choices=list(pp.SPLIT_NAMES), default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="experiment sweeps with box-plot output")
    common(p)
    p.add_argument("--fleet", type=str, default=None)
    p.add_argument("--kind", choices=list(SWEEP_GRIDS), default=None)
    p.add_argument("--grid", type=str, default=None,
                   help="comma-separated values; defaults per kind")
    p.add_argument("--repeats", type=int, default=None)
    p.add_argument("--channels", choices=["raw", "supplementary"], default=None)
    p.add_argument("--v-low", dest="v_low", type=float, default=None)
    p.add_argument("--v-high", dest="v_high", type=float, default=None)
    p.add_argument("--lv", type=int, default=None)
    p.add_argument("--rt", type=float, default=None)
    p.add_argument("--target-cells", dest="target_cells", type=str, default=None)
    model_flags(p)
    train_flags(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, CoverageError, FormatError, SimulationError,
            TrainingError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
