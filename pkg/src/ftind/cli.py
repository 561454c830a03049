"""``ftind`` command-line tool: simulate, fit, calibrate, decode, evaluate, replay.

Exit codes: 0 success, 1 usage error, 2 configuration/input error,
3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__, coil, metrics, synth, wire
from .calibration import (
    CalibrationDataset,
    calibrate,
    geometry_hash,
    load_calibration,
    save_calibration,
)
from .config import ConfigError, RunConfig, load_config, resolve_path
from .errors import (
    ChecksumError,
    ExtrapolationWarning,
    FtindError,
    SchemaError,
    VersionMismatch,
)
from .fitting import DISPLAY_NAMES, Family, FitModel, fit_nls
from .fitting import evaluate as eval_model
from .wrench import AXIS_NAMES

log = logging.getLogger("ftind")

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
SIMULATE_FILES = (
    "dataset.csv", "raw.csv", "reference.csv", "frames.ftlog", "schedule.csv", "config.json",
)


class UsageError(Exception):
    pass


class InputError(Exception):
    """Bad or missing input data; maps to exit code 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --- small IO helpers --------------------------------------------------------


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _write_series(path: Path, t_us, values) -> None:
    _write_rows(path, ["t_us", *AXIS_NAMES],
                ([t, *v] for t, v in zip(np.asarray(t_us).tolist(), np.asarray(values).tolist())))


def _read_table(path, columns) -> dict[str, np.ndarray]:
    """Read the named numeric columns of a CSV file."""
    data: dict[str, list] = {c: [] for c in columns}
    for line, row in wire.iter_csv_rows(path, required=columns):
        for c in columns:
            try:
                data[c].append(float(row[c]))
            except ValueError:
                raise SchemaError(f"column {c!r} is not numeric: {row[c]!r}", line=line) from None
    return {c: np.array(v) for c, v in data.items()}


def _read_raw(path: Path):
    """(t_us, counts) from a frame log or any CSV with t_us and ch0..ch5."""
    if path.suffix == ".ftlog":
        frames = wire.read_frame_log(path)
        t = np.array([f.timestamp_us for f in frames], dtype=np.int64)
        c = np.array([f.channels for f in frames], dtype=np.int64).reshape(-1, 6)
        return t, c
    cols = ["t_us", *(f"ch{i}" for i in range(6))]
    tab = _read_table(path, cols)
    return tab["t_us"].astype(np.int64), np.column_stack([tab[c] for c in cols[1:]])


def _read_wrench(path: Path):
    tab = _read_table(path, ["t_us", *AXIS_NAMES])
    return tab["t_us"].astype(np.int64), np.column_stack([tab[a] for a in AXIS_NAMES])


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _config(args) -> RunConfig:
    cfg = load_config(getattr(args, "config", None))
    if getattr(args, "seed", None) is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        cfg.seed = args.seed
    if getattr(args, "rate", None) is not None:
        cfg.rate = args.rate
    return cfg


# --- subcommands -------------------------------------------------------------


def simulate(cfg: RunConfig, keyframes, out: Path, strict: bool = False) -> dict:
    """Generate one dataset and write the six data files plus a manifest."""
    wrenches = synth.sample_schedule(keyframes, cfg.rate)
    half = cfg.ranges.as_array() / 2
    over = np.abs(wrenches) > half * (1 + 1e-12)
    if over.any():
        axes = sorted({AXIS_NAMES[j] for j in np.nonzero(over)[1]})
        if strict:
            raise ConfigError(f"schedule exceeds the rated range on {axes}")
        log.warning("schedule exceeds the rated range on %s", axes)
    ds = synth.generate_dataset(wrenches, cfg.sensor_model(), cfg.noise, cfg.rate, cfg.seed)
    out.mkdir(parents=True, exist_ok=True)
    ds.to_csv(out / "dataset.csv")
    _write_rows(out / "raw.csv", ["t_us", *(f"ch{i}" for i in range(6))],
                ([t, *c] for t, c in zip(ds.t_us.tolist(), ds.counts.tolist())))
    _write_series(out / "reference.csv", ds.t_us, ds.wrench)
    wire.write_frame_log(wire.frames_from_dataset(ds), out / "frames.ftlog")
    synth.save_schedule(keyframes, out / "schedule.csv")
    _write_json(out / "config.json", cfg.to_dict())
    manifest = {
        "tool": f"ftind {__version__}",
        "seed": cfg.seed,
        "config_sha256": cfg.digest(),
        "samples": len(ds),
        "files": {name: _sha256(out / name) for name in SIMULATE_FILES},
    }
    _write_json(out / "manifest.json", manifest)
    return manifest


def cmd_simulate(args) -> int:
    cfg = _config(args)
    keyframes = (
        synth.load_schedule(resolve_path(args.schedule)) if args.schedule
        else synth.demo_schedule()
    )
    manifest = simulate(cfg, keyframes, _out_dir(args), args.strict)
    print(json.dumps(manifest, indent=1, sort_keys=True))
    return EXIT_OK


def _read_xy(path: Path):
    xs, ys = [], []
    with open(path, newline="") as fh:
        for n, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            try:
                x, y = float(row[0]), float(row[1])
            except (ValueError, IndexError):
                if n == 1:
                    continue  # header
                raise SchemaError("expected two numeric columns (x, y)", line=n) from None
            xs.append(x)
            ys.append(y)
    if len(xs) < 2:
        raise InputError(f"{path}: need at least two (x, y) rows")
    return np.array(xs), np.array(ys)


def fit_families(xs, ys, families, full_scale, out: Path) -> list[dict]:
    """Fit each family, write its curve CSV, return the report dicts."""
    reports = []
    for fam in families:
        model, rep = fit_nls(fam, xs, ys, full_scale=full_scale)
        y_hat = eval_model(FitModel(fam, model.coefficients), xs)
        _write_rows(out / f"fit_curve_{fam.value}.csv", ["x", "y", "y_fit"],
                    zip(xs.tolist(), ys.tolist(), np.asarray(y_hat).tolist()))
        d = rep.to_dict()
        d["model"] = DISPLAY_NAMES[fam]
        d["coefficients"] = list(model.coefficients)
        reports.append(d)
    return reports


def _fit_table(reports, path: Path) -> None:
    _write_rows(path, ["model", "n_params", "rmse", "r2", "linearity_pct"],
                ([r["model"], r["n_params"], r["rmse"], r["r_squared"], r["linearity_error_pct"]]
                 for r in reports))


def cmd_fit(args) -> int:
    xs, ys = _read_xy(Path(args.input))
    if args.full_scale is not None and not args.full_scale > 0:
        raise UsageError("--full-scale must be > 0")
    families = list(Family) if args.family == "all" else [Family.parse(args.family)]
    out = _out_dir(args)
    reports = fit_families(xs, ys, families, args.full_scale, out)
    _write_json(out / "fit_reports.json", reports)
    if len(reports) > 1:
        _fit_table(reports, out / "table_fit_comparison.csv")
    print(json.dumps(reports if len(reports) > 1 else reports[0], indent=1, sort_keys=True))
    return EXIT_OK


def cmd_curve(args) -> int:
    geom = coil.load_geometry(args.geometry)
    x, gaps = synth.sqrt_inductance_curve(geom, args.d_min, args.d_max, args.points,
                                          args.coupling_scale)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_rows(out, ["sqrt_l_rel", "gap_mm"], zip(x.tolist(), gaps.tolist()))
    summary = coil.summarize(geom)
    print(json.dumps({k: v for k, v in vars(summary).items() if k != "extra"}, indent=1))
    return EXIT_OK


def run_calibration(cfg: RunConfig, dataset_csv: Path, out: Path, zero_samples: int):
    ds, _ = wire.ingest_csv(dataset_csv)
    cds = CalibrationDataset.from_dataset(ds, cfg.ranges.as_array(), zero_samples)
    cal, report = calibrate(cds, geometries=cfg.geometries)
    save_calibration(cal, out / "calibration.json")
    _write_json(out / "calibration_report.json", report.to_dict())
    return cal, report


def cmd_calibrate(args) -> int:
    cfg = _config(args)
    out = _out_dir(args)
    _, report = run_calibration(cfg, Path(args.input), out, args.zero_samples)
    print(json.dumps(report.to_dict(), indent=1, sort_keys=True))
    return EXIT_OK


def decode_file(cal, raw_path: Path, out_path: Path) -> int:
    t, counts = _read_raw(raw_path)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ExtrapolationWarning)
        wrench = cal.decode_array(counts)
    if caught:
        log.warning("%s: some samples lie outside the calibrated raw range", raw_path)
    _write_series(out_path, t, wrench)
    return len(t)


def cmd_decode(args) -> int:
    src = Path(args.input)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.calibration is None:
        t, counts = _read_raw(src)
        _write_rows(out, ["t_us", *(f"ch{i}" for i in range(6))],
                    ([ti, *c] for ti, c in zip(t.tolist(), counts.tolist())))
        return EXIT_OK
    expected = geometry_hash(_config(args).geometries) if args.config else None
    cal = load_calibration(args.calibration, expected, args.allow_geometry_mismatch)
    decode_file(cal, src, out)
    return EXIT_OK


def _noise_window(t_us, ref, window: str | None, ranges: metrics.AxisRanges):
    if window:
        try:
            start, end = (float(v) for v in window.split(":"))
        except ValueError:
            raise UsageError("--noise-window must look like START:END (seconds)") from None
        rel = (t_us - t_us[0]) * 1e-6
        return (rel >= start) & (rel <= end)
    # default: the leading unloaded segment of the reference
    quiet = np.all(np.abs(ref) <= 0.005 * ranges.as_array() / 2, axis=1)
    n = len(quiet) if quiet.all() else int(np.argmin(quiet))
    mask = np.zeros(len(quiet), dtype=bool)
    mask[:n] = True
    return mask


def run_evaluation(test_path: Path, ref_path: Path, cfg: RunConfig, k: float,
                   window: str | None) -> metrics.EvalReport:
    t_test, test = _read_wrench(test_path)
    t_ref, ref = _read_wrench(ref_path)
    if len(t_test) == 0 or len(t_ref) == 0:
        raise InputError("nothing to evaluate: empty decoded or reference series")
    test_a, ref_a = metrics.align_series(t_test, test, t_ref, ref)
    if len(test_a) < 2:
        raise InputError("decoded and reference series do not overlap in time")
    t_a, _ = metrics.align_series(t_test, t_test, t_ref, t_ref)
    mask = _noise_window(t_a, ref_a, window, cfg.ranges)
    if mask.sum() < 2:
        raise InputError("noise window holds fewer than two samples")
    return metrics.evaluate(test_a, ref_a, test_a[mask], cfg.ranges, k)


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    report = run_evaluation(Path(args.decoded), Path(args.reference), cfg,
                            args.sigma_multiplier, args.noise_window)
    out = _out_dir(args)
    _write_json(out / "eval_report.json", report.to_dict())
    write_tables(report.to_dict(), None, out)
    print(json.dumps(report.to_dict(), indent=1, sort_keys=True))
    return EXIT_OK


def cmd_replay(args) -> int:
    src = Path(args.input)
    if src.suffix == ".ftlog":
        frames = wire.read_frame_log(src)
    else:
        t, counts = _read_raw(src)
        frames = [wire.RawFrame(k, int(ti) & 0xFFFFFFFF, tuple(c))
                  for k, (ti, c) in enumerate(zip(t.tolist(), counts.tolist()))]
    if args.sink == "file" and not args.sink_path:
        raise UsageError("--sink file needs --sink-path")
    sink, close = wire.make_sink(args.sink, args.sink_path)
    try:
        stats = wire.replay(frames, args.rate, sink)
    finally:
        close()
    print(json.dumps(stats.to_dict(), indent=1), file=sys.stderr)
    return EXIT_OK


def write_tables(eval_report: dict | None, fit_reports: list | None, out: Path) -> list[str]:
    """Summary tables as CSV; returns the file names written."""
    written = []
    if fit_reports:
        _fit_table(fit_reports, out / "table_fit_comparison.csv")
        written.append("table_fit_comparison.csv")
    if eval_report:
        fse = eval_report["full_scale_error"]
        _write_rows(out / "table_full_scale_error.csv",
                    ["axis", "mean_pct", "std_pct", "max_pct", "rmse"],
                    ([a, e["mean_pct"], e["std_pct"], e["max_pct"], e["rmse"]]
                     for a, e in zip(AXIS_NAMES, fse)))
        _write_rows(out / "table_resolution.csv",
                    ["axis", "std", "sigma_multiplier", "resolution", "quantization_levels"],
                    ([a, s, eval_report["sigma_multiplier"], r, q] for a, s, r, q in zip(
                        AXIS_NAMES, eval_report["std"], eval_report["resolution"],
                        eval_report["quantization_levels"])))
        written += ["table_full_scale_error.csv", "table_resolution.csv"]
        if eval_report.get("crosstalk") is not None:
            _write_rows(out / "table_crosstalk.csv", ["excited", *AXIS_NAMES],
                        ([a, *row] for a, row in zip(AXIS_NAMES, eval_report["crosstalk"])))
            written.append("table_crosstalk.csv")
    return written


def report(src: Path, out: Path) -> list[str]:
    eval_path, fit_path = src / "eval_report.json", src / "fit_reports.json"
    eval_report = json.loads(eval_path.read_text()) if eval_path.exists() else None
    fit_reports = json.loads(fit_path.read_text()) if fit_path.exists() else None
    if not eval_report and not fit_reports:
        raise InputError(f"{src}: no evaluation or fit results to report")
    out.mkdir(parents=True, exist_ok=True)
    written = write_tables(eval_report, fit_reports, out)
    # curve series for plotting travel with the fit results
    for p in sorted(src.glob("fit_curve_*.csv")):
        if p.parent.resolve() != out.resolve():
            (out / p.name).write_bytes(p.read_bytes())
        written.append(p.name)
    return written


def cmd_report(args) -> int:
    written = report(Path(args.input), _out_dir(args))
    print("\n".join(written))
    return EXIT_OK


def demo(cfg: RunConfig, out: Path) -> dict:
    """Full pipeline on synthetic data; every output is a function of (cfg, seed)."""
    out.mkdir(parents=True, exist_ok=True)
    cal_dir, eval_dir = out / "calibration_run", out / "evaluation_run"
    simulate(cfg, synth.demo_schedule(), cal_dir)
    eval_cfg = RunConfig(**{**vars(cfg), "seed": (cfg.seed + 1) % 2**64})
    simulate(eval_cfg, synth.demo_schedule(lead=10.0, combined=8, seed=11), eval_dir)

    cal, cal_report = run_calibration(cfg, cal_dir / "dataset.csv", out, zero_samples=100)
    decode_file(cal, eval_dir / "frames.ftlog", out / "decoded.csv")
    ev = run_evaluation(out / "decoded.csv", eval_dir / "reference.csv", cfg, 3.0, "0:10")
    _write_json(out / "eval_report.json", ev.to_dict())

    x, gaps = synth.sqrt_inductance_curve(cfg.vertical_coil, coupling_scale=cfg.coupling_scale)
    _write_rows(out / "coil_curve.csv", ["sqrt_l_rel", "gap_mm"], zip(x.tolist(), gaps.tolist()))
    fits = fit_families(x, gaps, list(Family), None, out)
    _write_json(out / "fit_reports.json", fits)
    tables = report(out, out / "report")
    return {"calibration": cal_report.to_dict(), "evaluation": ev.to_dict(), "tables": tables}


def cmd_demo(args) -> int:
    cfg = _config(args)
    summary = demo(cfg, _out_dir(args))
    print(json.dumps({"fs_error_max_pct": [e["max_pct"] for e in
                                           summary["evaluation"]["full_scale_error"]],
                      "tables": summary["tables"]}, indent=1))
    return EXIT_OK


# --- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ftind", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"ftind {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", required=True)

    def common(sp, seed=True):
        sp.add_argument("--config", help="run config JSON (searched in $FTIND_CONFIG_DIR)")
        if seed:
            sp.add_argument("--seed", type=int, help="RNG seed (64-bit)")

    s = sub.add_parser("simulate", help="generate a synthetic dataset")
    common(s)
    s.add_argument("--schedule", help="keyframe CSV (t_s,fx..tz); default: demo schedule")
    s.add_argument("--rate", type=float, help="sample rate in Hz (<= 4080)")
    s.add_argument("--strict", action="store_true", help="reject schedules beyond rated range")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("fit", help="fit curve families to a two-column CSV")
    s.add_argument("input", help="CSV with columns x, y")
    s.add_argument("--family", default="rational",
                   help="polynomial4 | sigmoid | gaussian | rational | all")
    s.add_argument("--full-scale", type=float, help="linearity-error basis (default: y span)")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("curve", help="write a sqrt(L)-vs-gap curve from the coil model")
    s.add_argument("--geometry", default="vertical_coil", help="preset name or geometry JSON")
    s.add_argument("--d-min", type=float, default=0.01, help="min gap / D_avg")
    s.add_argument("--d-max", type=float, default=3.0, help="max gap / D_avg")
    s.add_argument("--points", type=int, default=200)
    s.add_argument("--coupling-scale", type=float, default=0.3)
    s.add_argument("--out", required=True, help="output CSV")
    s.set_defaults(func=cmd_curve)

    s = sub.add_parser("calibrate", help="fit a calibration to a dataset CSV")
    common(s, seed=False)
    s.add_argument("input", help="dataset CSV (t_us,fx..tz,ch0..ch5)")
    s.add_argument("--zero-samples", type=int, default=1,
                   help="leading unloaded samples used for the zero-load reading")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("decode", help="decode raw counts (CSV or .ftlog) to wrenches")
    common(s, seed=False)
    s.add_argument("input", help="raw CSV (t_us,ch0..ch5) or frame log")
    s.add_argument("--calibration", help="calibration file; omit to dump raw frames as CSV")
    s.add_argument("--allow-geometry-mismatch", action="store_true")
    s.add_argument("--out", required=True, help="output CSV")
    s.set_defaults(func=cmd_decode)

    s = sub.add_parser("evaluate", help="compare decoded wrenches with a reference")
    common(s, seed=False)
    s.add_argument("decoded", help="decoded CSV (t_us,fx..tz)")
    s.add_argument("reference", help="reference CSV (t_us,fx..tz)")
    s.add_argument("--sigma-multiplier", type=float, default=3.0,
                   help="resolution = k * std over the noise window")
    s.add_argument("--noise-window", help="START:END seconds from the first sample")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("replay", help="stream frames at a fixed rate")
    s.add_argument("input", help="frame log or raw CSV")
    s.add_argument("--rate", type=float, default=1000.0, help="Hz, 1..4080")
    s.add_argument("--sink", choices=["stdout", "file", "null"], default="null")
    s.add_argument("--sink-path", help="output frame log for --sink file")
    s.set_defaults(func=cmd_replay)

    s = sub.add_parser("report", help="summary tables from saved results")
    s.add_argument("input", help="directory holding eval_report.json / fit_reports.json")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("demo", help="run the whole pipeline on synthetic data")
    common(s)
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_demo)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"ftind: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, InputError, SchemaError, VersionMismatch, ChecksumError,
            FileNotFoundError, IsADirectoryError, ValueError) as exc:
        print(f"ftind: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FtindError, ArithmeticError, OSError) as exc:
        print(f"ftind: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
