"""Command-line pipeline: gen, train, infer, eval, report.

Everything lives under one workspace directory (--out, default
./tideop-out):

    datasets/<benchmark>-{train,test}[-desk]/   reference trajectories
    runs/<preset>[-desk]/                       one training run
        resolved_config.json  history.csv  model/  state/
        infer-<tag>/          rollout traces or direct predictions
        eval-<tag>.json       per-example errors, timing, residual stats
    report/<benchmark>[-desk]/                  comparison table + curves

Failures print one JSON line to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import deeponet as dn
from . import evaluate as ev
from . import presets as ps
from . import rollout as ro
from . import trainer as tr
from .grids import read_dataset, write_dataset


class CliError(Exception):
    def __init__(self, code, message, hint=None):
        super().__init__(message)
        self.code = code
        self.hint = hint


def _gen_id(name):
    """Accept either a benchmark id or a full preset id."""
    if name in ps.GEN_IDS:
        return name
    prefix = name.split("-", 1)[0]
    if name in ps.PRESET_IDS:
        return prefix
    raise CliError(
        "unknown-preset",
        f"unknown preset '{name}'",
        f"benchmarks: {', '.join(ps.GEN_IDS)}; presets: {', '.join(ps.PRESET_IDS)}",
    )


def _train_preset(name):
    """Accept a full preset id; map a bare benchmark to its default preset."""
    if name in ps.PRESET_IDS:
        return name
    if name in ps.GEN_IDS:
        fallback = f"{name}-piti"
        return fallback if fallback in ps.PRESET_IDS else f"{name}-piti-hy"
    raise CliError(
        "unknown-preset",
        f"unknown preset '{name}'",
        f"available presets: {', '.join(ps.PRESET_IDS)}",
    )


def _suffix(desk):
    return "-desk" if desk else ""


def _dataset_dir(out, gen, split, desk):
    return Path(out) / "datasets" / f"{gen}-{split}{_suffix(desk)}"


def _run_dir(out, preset, desk):
    return Path(out) / "runs" / f"{preset}{_suffix(desk)}"


def _load_dataset(out, gen, split, desk):
    path = _dataset_dir(out, gen, split, desk)
    if not (path / "manifest.json").exists():
        flag = " --desk-scale" if desk else ""
        raise CliError(
            "missing-dataset",
            f"no {split} container at {path}",
            f"run: tideop gen --preset {gen}{flag}",
        )
    return read_dataset(path)


def _merge_overrides(base, overrides, prefix=""):
    for key, value in overrides.items():
        if key not in base:
            raise CliError(
                "unknown-config-key",
                f"unknown config key '{prefix}{key}'",
                f"valid keys here: {', '.join(sorted(base))}",
            )
        if isinstance(value, dict) and isinstance(base[key], dict):
            _merge_overrides(base[key], value, f"{prefix}{key}.")
        else:
            base[key] = value


def _resolve_train_config(args):
    preset = _train_preset(args.preset)
    cfg = ps.train_config(preset, desk_scale=args.desk_scale, seed=args.seed)
    if args.config:
        try:
            with open(args.config) as f:
                overrides = json.load(f)
        except FileNotFoundError:
            raise CliError("missing-config", f"config file not found: {args.config}")
        except json.JSONDecodeError as e:
            raise CliError("bad-config", f"config file is not valid JSON: {e}")
        if not isinstance(overrides, dict):
            raise CliError("bad-config", "config file must hold a JSON object")
        merged = cfg.to_dict()
        _merge_overrides(merged, overrides)
        try:
            cfg = tr.TrainConfig.from_dict(merged)
        except (ValueError, TypeError) as e:
            raise CliError("bad-config", f"resolved config is invalid: {e}")
    return preset, cfg


def _infer_tag(method, scheme, dt):
    if method == "fr":
        return "fr"
    if method == "ar":
        return f"ar-dt{dt:g}"
    return f"{scheme}-dt{dt:g}"


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen(args):
    gen = _gen_id(args.preset)
    plan = ps.data_plan(gen, desk_scale=args.desk_scale)
    for split in ("train", "test"):
        t0 = time.perf_counter()
        container = ps.generate(plan, split, seed=args.seed)
        path = write_dataset(container, _dataset_dir(args.out, gen, split, args.desk_scale))
        print(
            f"gen {gen} {split}: {container.n_trajectories} trajectories, "
            f"{len(container.trajectories[0].times)} times -> {path} "
            f"({time.perf_counter() - t0:.1f}s)"
        )
    return 0


def cmd_train(args):
    preset, cfg = _resolve_train_config(args)
    dataset = _load_dataset(args.out, _gen_id(preset), "train", args.desk_scale)
    run_dir = _run_dir(args.out, preset, args.desk_scale)
    run_dir.mkdir(parents=True, exist_ok=True)
    resolved = {
        "tool_version": __version__,
        "command": "train",
        "preset": preset,
        "desk_scale": args.desk_scale,
        "seed": cfg.seed,
        "dataset": str(_dataset_dir(args.out, _gen_id(preset), "train", args.desk_scale)),
        "train_config": cfg.to_dict(),
    }
    with open(run_dir / "resolved_config.json", "w") as f:
        json.dump(resolved, f, indent=1, sort_keys=True)
    t0 = time.perf_counter()
    result = tr.train(cfg, dataset, out_dir=run_dir)
    wall = time.perf_counter() - t0
    last = result.history[-1] if result.history else None
    if result.aborted:
        raise CliError(
            "training-aborted",
            f"non-finite loss or gradient at step {result.failing_step}; "
            f"parameters from step {result.failing_step - 1} were saved",
        )
    if last:
        vu = last["val_rel_l2_u"]
        vt = last["val_rel_l2_ut"]
        print(
            f"train {preset}: {len(result.history)} steps in {wall:.0f}s; "
            f"total={last['total']:.6g}"
            + (f" val_u={vu:.4g}" if vu is not None else "")
            + (f" val_ut={vt:.4g}" if vt is not None else "")
        )
    else:
        print(f"train {preset}: 0 steps (nothing to do)")
    print(f"run directory: {run_dir}")
    return 0


def _load_run(args):
    preset = _train_preset(args.preset)
    run_dir = _run_dir(args.out, preset, args.desk_scale)
    cfg_path = run_dir / "resolved_config.json"
    if not cfg_path.exists():
        flag = " --desk-scale" if args.desk_scale else ""
        raise CliError(
            "missing-run",
            f"no training run at {run_dir}",
            f"run: tideop train --preset {preset}{flag}",
        )
    with open(cfg_path) as f:
        resolved = json.load(f)
    cfg = tr.TrainConfig.from_dict(resolved["train_config"])
    net, params, _, step = dn.load_checkpoint(run_dir / "model")
    if net != cfg.net:
        raise CliError(
            "checkpoint-mismatch",
            f"checkpoint architecture in {run_dir}/model does not match the resolved config",
        )
    return preset, run_dir, cfg, params, step


def cmd_infer(args):
    preset, run_dir, cfg, params, _ = _load_run(args)
    test = _load_dataset(args.out, _gen_id(preset), "test", args.desk_scale)
    grid = test.grid
    method = {"fr": "fr", "ar": "ar"}.get(cfg.mode, "piti")
    dt = args.dt if args.dt is not None else (cfg.ar_dt if method == "ar" else 0.01)
    tag = _infer_tag(method, args.scheme, dt)
    infer_dir = run_dir / f"infer-{tag}"
    infer_dir.mkdir(parents=True, exist_ok=True)
    horizon = float(test.trajectories[0].times[-1])
    n_examples = test.n_trajectories
    manifest = {
        "tool_version": __version__,
        "preset": preset,
        "method": method,
        "n_examples": n_examples,
        "horizon": horizon,
    }
    if method == "piti":
        n_steps = int(round(horizon / dt))
        walls = []
        for i, traj in enumerate(test.trajectories):
            trace = ro.piti_infer(
                params, cfg.net, grid, traj.u[0], dt, n_steps,
                scheme=args.scheme, residual_threshold=args.threshold,
            )
            ro.write_trace(trace, infer_dir / f"ex{i:03d}")
            walls.append(float(trace.wall_s.sum()))
        manifest.update(scheme=args.scheme, dt=dt, n_states=n_steps + 1, wall_s=walls)
        print(f"infer {preset} [{tag}]: {n_examples} traces of {n_steps + 1} states -> {infer_dir}")
    else:
        preds, walls = [], []
        for traj in test.trajectories:
            t0 = time.perf_counter()
            if method == "fr":
                states = ro.fr_infer(params, cfg.net, grid, traj.u[0], traj.times)
                times = traj.times
            else:
                n_steps = int(round(horizon / dt))
                states = ro.ar_infer(params, cfg.net, grid, traj.u[0], n_steps, dt)
                times = np.arange(n_steps + 1) * dt
            walls.append(time.perf_counter() - t0)
            preds.append(states)
        preds = np.stack(preds)
        preds.astype("<f8").tofile(infer_dir / "preds.f64")
        manifest.update(
            dt=dt if method == "ar" else None,
            times=[float(t) for t in times],
            shape=list(preds.shape[2:]),
            wall_s=walls,
        )
        print(f"infer {preset} [{tag}]: {n_examples} x {len(times)} states -> {infer_dir}")
    with open(infer_dir / "infer.json", "w") as f:
        json.dump(manifest, f, indent=1)
    return 0


def _matched_indices(ref_times, pred_times):
    """Pairs (i_ref, i_pred) where the two time grids coincide."""
    out = []
    for i, t in enumerate(ref_times):
        j = np.argmin(np.abs(pred_times - t))
        if abs(pred_times[j] - t) < 1e-9:
            out.append((i, int(j)))
    return out


def cmd_eval(args):
    preset, run_dir, cfg, _, _ = _load_run(args)
    test = _load_dataset(args.out, _gen_id(preset), "test", args.desk_scale)
    method = {"fr": "fr", "ar": "ar"}.get(cfg.mode, "piti")
    dt = args.dt if args.dt is not None else (cfg.ar_dt if method == "ar" else 0.01)
    tag = _infer_tag(method, args.scheme, dt)
    infer_dir = run_dir / f"infer-{tag}"
    if not (infer_dir / "infer.json").exists():
        flag = " --desk-scale" if args.desk_scale else ""
        raise CliError(
            "missing-inference",
            f"no inference artifacts at {infer_dir}",
            f"run: tideop infer --preset {preset}{flag} --scheme {args.scheme} --dt {dt:g}",
        )
    with open(infer_dir / "infer.json") as f:
        manifest = json.load(f)
    refs = test.trajectories
    ref_times = refs[0].times

    per_example_series = []
    residual_series, sq_error_series = [], []
    if method == "piti":
        pred_times = np.arange(manifest["n_states"]) * manifest["dt"]
        pairs = _matched_indices(ref_times, pred_times)
        for i, traj in enumerate(refs):
            trace = ro.read_trace(infer_dir / f"ex{i:03d}")
            errs, res, sq = [], [], []
            for ir, jp in pairs:
                if jp < trace.n_states:
                    errs.append(ev.rel_l2(trace.states[jp], traj.u[ir]))
                    sq.append(float(np.mean((trace.states[jp] - traj.u[ir]) ** 2)))
                    if trace.residual_mean is not None:
                        res.append(float(trace.residual_mean[jp]))
                else:  # diverged trace: no state to score
                    errs.append(float("inf"))
            per_example_series.append(errs)
            if res and len(res) == len(errs):
                residual_series.append(res)
                sq_error_series.append(sq)
    else:
        pred_times = np.asarray(manifest["times"], dtype=np.float64)
        shape = tuple(manifest["shape"])
        preds = np.fromfile(infer_dir / "preds.f64", dtype="<f8").reshape(
            len(refs), len(pred_times), *shape
        )
        pairs = _matched_indices(ref_times, pred_times)
        for i, traj in enumerate(refs):
            per_example_series.append(
                [ev.rel_l2(preds[i, jp], traj.u[ir]) for ir, jp in pairs]
            )

    times = [float(ref_times[ir]) for ir, _ in pairs]
    errors = np.asarray(per_example_series, dtype=np.float64)
    summary = {
        "tool_version": __version__,
        "preset": preset,
        "method_row": f"piti_{args.scheme}" if method == "piti" else method,
        "dt": manifest.get("dt"),
        "times": times,
        "mean_per_time": [float(v) for v in errors.mean(axis=0)],
        "per_example_terminal": [float(v) for v in errors[:, -1]],
        "terminal_mean": float(errors[:, -1].mean()),
        "timing_s": manifest["wall_s"],
        "residual_mae": None,
        "residual_rho": None,
    }
    if residual_series:
        corr = ev.residual_error_correlation(residual_series, sq_error_series)
        summary["residual_mae"] = corr.mae
        summary["residual_rho"] = None if corr.degenerate_perfect else corr.rho
    out_path = run_dir / f"eval-{tag}.json"
    with open(out_path, "w") as f:
        json.dump(summary, f, indent=1)
    rho = summary["residual_rho"]
    print(
        f"eval {preset} [{tag}]: terminal rel-L2 mean {summary['terminal_mean']:.4g} "
        f"over {len(refs)} examples"
        + (f", residual rho {rho:.3f}" if rho is not None else "")
    )
    print(f"wrote {out_path}")
    return 0


# preference order of runs feeding each table row
_ROW_SOURCES = {
    "fr": ("{g}-fr", "{g}-fr-hy"),
    "ar": ("{g}-ar", "{g}-ar-hy"),
    "piti": ("{g}-piti", "{g}-piti-hy"),
}


def cmd_report(args):
    gen = _gen_id(args.preset)
    results, curves = {}, {}
    for row_kind, patterns in _ROW_SOURCES.items():
        for pattern in patterns:
            preset = pattern.format(g=gen)
            if preset not in ps.PRESET_IDS:
                continue
            run_dir = _run_dir(args.out, preset, args.desk_scale)
            found = False
            for eval_path in sorted(run_dir.glob("eval-*.json")):
                with open(eval_path) as f:
                    summary = json.load(f)
                row = summary["method_row"]
                if row in results:
                    continue
                results[row] = ev.MethodResult(
                    errors=np.asarray(summary["per_example_terminal"]),
                    timing_runs=np.asarray(summary["timing_s"]),
                )
                curves[row] = (
                    np.asarray(summary["times"]),
                    np.asarray(summary["mean_per_time"]),
                )
                found = True
            if found:
                break
    if not results:
        raise CliError(
            "missing-evals",
            f"no eval artifacts found for benchmark '{gen}'",
            "run tideop eval for at least one preset first",
        )
    # curves can only be drawn on a shared time axis
    axes = {tuple(t) for t, _ in curves.values()}
    if len(axes) > 1:
        curves = {}
    report_dir = Path(args.out) / "report" / f"{gen}{_suffix(args.desk_scale)}"
    table = ev.report(results, report_dir, error_curves=curves or None)
    print(f"report {gen}: {len(results)} method rows -> {table}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def build_parser():
    parser = argparse.ArgumentParser(
        prog="tideop",
        description="Learned temporal-tangent operators for time-dependent PDEs: "
        "dataset generation, training, time-stepper inference, evaluation, reporting.",
    )
    parser.add_argument("--version", action="version", version=f"tideop {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, preset_help):
        p.add_argument("--preset", required=True, help=preset_help)
        p.add_argument("--out", default="tideop-out", help="workspace directory")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--desk-scale", action="store_true",
                       help="laptop-sized datasets and networks")

    p = sub.add_parser("gen", help="generate reference train/test containers")
    common(p, f"benchmark: {', '.join(ps.GEN_IDS)}")
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("train", help="train one preset on its train container")
    common(p, f"one of: {', '.join(ps.PRESET_IDS)}")
    p.add_argument("--config", help="JSON file of config overrides (strict keys)")
    p.set_defaults(fn=cmd_train)

    for name, fn, help_text in (
        ("infer", cmd_infer, "roll out / evaluate a trained model on the test set"),
        ("eval", cmd_eval, "score inference artifacts against the reference"),
    ):
        p = sub.add_parser(name, help=help_text)
        common(p, "trained preset id")
        p.add_argument("--scheme", choices=ro.SCHEMES, default="euler",
                       help="time stepper (tangent-operator runs only)")
        p.add_argument("--dt", type=float, default=None,
                       help="stepper step (default 0.01; ar presets use their trained step)")
        if name == "infer":
            p.add_argument("--threshold", type=float, default=None,
                           help="residual-monitor flag level")
        p.set_defaults(fn=fn)

    p = sub.add_parser("report", help="assemble the per-benchmark comparison table")
    common(p, f"benchmark: {', '.join(ps.GEN_IDS)}")
    p.set_defaults(fn=cmd_report)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except CliError as e:
        line = {"error": e.code, "message": str(e)}
        if e.hint:
            line["hint"] = e.hint
        print(json.dumps(line), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
