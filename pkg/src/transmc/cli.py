"""Command-line entry point.

Subcommands: simulate, fit, transfer, select, benchmark, evaluate. Relative
paths resolve against the workspace root given by the TRANSMC_WORKSPACE
environment variable (default: current directory). Validation failures exit
nonzero after printing a single ``error: ...`` line to stderr.
"""

import argparse
import concurrent.futures
import csv
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from transmc import data_io, metrics, simulation
from transmc.datasets import MaskedDataset
from transmc.estimators import (
    PenaltyPolicy,
    estimate_noise_scale,
    fit_single,
    theorem_penalty,
    trans_mc,
)
from transmc.selection import SelectionConfig, s_trans_mc
from transmc.simulation import PRESETS, ScenarioSpec, generate_scenario
from transmc.solver import SolverConfig, SolverDivergedError

SCHEME_LABELS = {"uniform": "SS1", "product": "SS2"}
# Penalty multipliers calibrated for the shipped presets (noise sd 1, cap 30).
DEFAULT_MULTIPLIER = 0.07

# Synthetic partially-observed frame sequences for the holdout pipeline.
TEC_PRESETS = {
    "tec-synthetic-small": dict(m1=91, m2=180, n_frames=12, rank=5, missing=0.25,
                                noise_sd=1.0, drift=0.02, seed=42),
    "tec-synthetic-tiny": dict(m1=20, m2=30, n_frames=6, rank=2, missing=0.25,
                               noise_sd=0.5, drift=0.02, seed=42),
}


class CliError(Exception):
    pass


def _workspace() -> Path:
    return Path(os.environ.get("TRANSMC_WORKSPACE", "."))


def _resolve(path) -> Path:
    p = Path(path)
    return p if p.is_absolute() else _workspace() / p


def _load_spec(args) -> ScenarioSpec:
    if args.preset and args.config:
        raise CliError("pass either --preset or --config, not both")
    if args.preset:
        if args.preset not in PRESETS:
            known = ", ".join(sorted(PRESETS))
            raise CliError(f"unknown preset {args.preset!r}; known presets: {known}")
        spec = PRESETS[args.preset]
    elif args.config:
        spec = data_io.read_scenario(_resolve(args.config))
    else:
        raise CliError("need --preset or --config")
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    return spec


def _out_dir(args) -> Path:
    out = _resolve(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_dataset(path, task_id=None):
    """Accept either a sample file (duplicates allowed) or a TEC-style frame."""
    path = _resolve(path)
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
    if len(header) == 3 and header[2].startswith("task"):
        ds = data_io.read_samples(path)
    else:
        ds = data_io.read_frame(path).to_dataset()
    if task_id is not None and ds.task_id != task_id:
        ds = MaskedDataset(ds.m1, ds.m2, ds.rows, ds.cols, ds.values, task_id)
    return ds


def _policy_from_args(args, box_level) -> PenaltyPolicy:
    return PenaltyPolicy(a=box_level, c1=args.c1, c2=args.c2, v=args.noise_sd)


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def _simulate_tec_frames(args) -> int:
    params = dict(TEC_PRESETS[args.preset])
    if args.seed is not None:
        params["seed"] = args.seed
    out = _out_dir(args)
    truths, observations = simulation.synthetic_frames(**params)
    names = []
    for t, ((rows, cols, values), truth) in enumerate(zip(observations, truths)):
        name = f"frame_{t:03d}.frame"
        frame = data_io.FrameFile(params["m1"], params["m2"], f"t{t:03d}",
                                  rows, cols, values)
        data_io.write_frame(frame, out / name)
        data_io.write_dense(truth, out / f"truth_{t:03d}.txt", label=f"t{t:03d}")
        names.append(name)
    n_eval = min(10, len(names))
    with open(out / "eval.cfg", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"frames: {','.join(str(out / n) for n in names)}\n")
        fh.write(f"targets: 0-{n_eval - 1}\n")
        fh.write("half_width: 10\n")
        fh.write("holdout_fraction: 0.2\n")
        fh.write(f"seed: {params['seed']}\n")
        fh.write(f"noise_sd: {params['noise_sd']!r}\n")
        fh.write("methods: single,transmc\n")
    print(f"wrote {len(names)} frames + truths + eval.cfg to {out}")
    return 0


def cmd_simulate(args) -> int:
    if args.preset in TEC_PRESETS:
        return _simulate_tec_frames(args)
    spec = _load_spec(args)
    out = _out_dir(args)
    data = generate_scenario(spec, rep=args.rep)

    data_io.write_scenario(spec, out / "scenario.cfg")
    data_io.write_dense(data.truth, out / "truth_task00.txt", label="task0")
    data_io.write_samples(data.target, out / "target.samples")
    source_files = []
    for k, (ds, truth) in enumerate(zip(data.sources, data.source_truths), start=1):
        name = f"source_{k:02d}.samples"
        data_io.write_samples(ds, out / name)
        data_io.write_dense(truth, out / f"truth_task{k:02d}.txt", label=f"task{k}")
        source_files.append(name)

    with open(out / "simulate_manifest.txt", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("scenario: scenario.cfg\n")
        fh.write("target: target.samples\n")
        fh.write(f"sources: {','.join(source_files)}\n")
        fh.write(f"rep: {args.rep}\n")
        fh.write("achieved_contrasts: "
                 + ",".join(f"{h!r}" for h in data.achieved_contrasts) + "\n")
    print(f"wrote 1 target, {len(source_files)} sources, {1 + len(source_files)} "
          f"truth matrices to {out}")
    return 0


# ---------------------------------------------------------------------------
# fit / transfer / select
# ---------------------------------------------------------------------------

def _solver_config(args) -> SolverConfig:
    return SolverConfig(max_iters=args.max_iters)


def cmd_fit(args) -> int:
    if not args.data:
        raise CliError("fit needs --data FILE")
    ds = _load_dataset(args.data)
    a = args.a if args.a is not None else 1.05 * ds.data_scale()
    lam = args.lam
    if lam is None:
        m = min(ds.m1, ds.m2)
        v = args.noise_sd
        if v is None:
            v = estimate_noise_scale(ds, a, _solver_config(args))
        lam = theorem_penalty(args.c2, a, v, ds.n, m)
    est = fit_single(ds, lam, a, _solver_config(args))
    out = _out_dir(args)
    data_io.write_dense(est.matrix, out / "estimate.txt", label="single")
    _write_fit_report(out / "fit_report.txt", est)
    print(f"single-task fit: lam={lam:.6g}, iterations={est.trace.iterations}, "
          f"converged={est.trace.converged}")
    return 0


def _write_fit_report(path, est):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"stage: {est.stage}\n")
        fh.write(f"penalty: {est.penalty_used!r}\n")
        fh.write(f"iterations: {est.trace.iterations}\n")
        fh.write(f"converged: {est.trace.converged}\n")
        fh.write(f"objective: {est.trace.objective_values[-1]!r}\n")


def _load_transfer_inputs(args):
    if not args.target or not args.sources:
        raise CliError("need --target FILE and --sources F1,F2,...")
    target = _load_dataset(args.target, task_id=0)
    sources = [
        _load_dataset(p, task_id=k + 1)
        for k, p in enumerate(args.sources.split(","))
        if p
    ]
    return target, sources


def cmd_transfer(args) -> int:
    target, sources = _load_transfer_inputs(args)
    a = args.a if args.a is not None else 1.05 * max(
        ds.data_scale() for ds in [target, *sources]
    )
    est = trans_mc(target, sources, _policy_from_args(args, a), _solver_config(args))
    out = _out_dir(args)
    data_io.write_dense(est.matrix, out / "estimate.txt", label="transmc")
    _write_fit_report(out / "fit_report.txt", est)
    print(f"transfer fit over {len(sources)} sources: "
          f"iterations={est.trace.iterations}, converged={est.trace.converged}")
    return 0


def cmd_select(args) -> int:
    target, sources = _load_transfer_inputs(args)
    a = args.a if args.a is not None else 1.05 * max(
        ds.data_scale() for ds in [target, *sources]
    )
    sel_cfg = SelectionConfig(
        J=args.folds, c_tilde=args.c_tilde, epsilon0=args.epsilon0,
        c0=args.c1, ck=args.c2, seed=args.seed if args.seed is not None else 0,
    )
    report, est = s_trans_mc(target, sources, sel_cfg,
                             _policy_from_args(args, a), _solver_config(args))
    out = _out_dir(args)
    data_io.write_dense(est.matrix, out / "estimate.txt", label="s-transmc")
    _write_fit_report(out / "fit_report.txt", est)
    _write_selection_report(out / "selection_report.csv", report)
    print(f"selected sources: {list(report.selected)} "
          f"(threshold {report.threshold:.6g})")
    return 0


def _write_selection_report(path, report):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["quantity", "index", "value"])
        for j, x in enumerate(report.fold_losses):
            w.writerow(["fold_loss", j, f"{x:.12g}"])
        w.writerow(["benchmark", "", f"{report.benchmark:.12g}"])
        for k, x in enumerate(report.source_losses, start=1):
            w.writerow(["source_loss", k, f"{x:.12g}"])
        w.writerow(["sigma_hat", "", f"{report.sigma_hat:.12g}"])
        w.writerow(["epsilon0", "", f"{report.epsilon0:.12g}"])
        w.writerow(["threshold", "", f"{report.threshold:.12g}"])
        w.writerow(["selected", "", " ".join(str(k) for k in report.selected)])


# ---------------------------------------------------------------------------
# benchmark
# ---------------------------------------------------------------------------

def _bench_worker(payload):
    """One (scheme, replicate) cell; returns per-method errors and the curve."""
    spec, rep, methods, params = payload
    data = generate_scenario(spec, rep=rep)
    solver = SolverConfig(max_iters=params["max_iters"])
    policy = PenaltyPolicy(a=spec.a_cap, c1=params["c1"], c2=params["c2"],
                           v=spec.noise_sd)
    m = min(spec.m1, spec.m2)
    lam_single = theorem_penalty(params["c2"], spec.a_cap, spec.noise_sd,
                                 data.target.n, m)
    result = {"rep": rep, "errors": {}, "curve": None, "selected": None,
              "failures": []}

    def run(tag, fn):
        try:
            return fn()
        except SolverDivergedError as exc:
            result["failures"].append(f"{tag}: {exc}")
            return None

    if "single" in methods:
        est = run("single", lambda: fit_single(data.target, lam_single,
                                               spec.a_cap, solver))
        result["errors"]["single"] = (
            None if est is None else metrics.rel_frob_error(est.matrix, data.truth)
        )
    if "transmc" in methods:
        est = run("transmc", lambda: trans_mc(data.target, data.sources,
                                              policy, solver))
        result["errors"]["transmc"] = (
            None if est is None else metrics.rel_frob_error(est.matrix, data.truth)
        )
    if "s-transmc" in methods:
        sel_cfg = SelectionConfig(J=params["folds"], c_tilde=params["c_tilde"],
                                  epsilon0=params["epsilon0"], c0=params["c1"],
                                  ck=params["c2"], seed=(spec.seed, 4, rep))
        def run_sel():
            report, est = s_trans_mc(data.target, data.sources, sel_cfg,
                                     policy, solver)
            return report, est
        out = run("s-transmc", run_sel)
        if out is None:
            result["errors"]["s-transmc"] = None
        else:
            report, est = out
            result["errors"]["s-transmc"] = metrics.rel_frob_error(est.matrix, data.truth)
            result["selected"] = report.selected
    if "curve" in methods:
        curve = []
        for k in range(len(data.sources) + 1):
            est = run(f"curve-k{k}",
                      lambda k=k: trans_mc(data.target, data.sources[:k],
                                           policy, solver))
            curve.append(None if est is None
                         else metrics.rel_frob_error(est.matrix, data.truth))
        result["curve"] = curve
    return result


def run_benchmark(spec: ScenarioSpec, reps: int, methods, params, jobs: int = 1,
                  schemes=("uniform", "product")):
    """Replicates of each scheme, merged in (scheme, replicate) order.

    Returns {scheme_label: {"results": [per-rep dicts], "spec": spec}}.
    """
    tasks = []
    for scheme in schemes:
        scheme_spec = replace(spec, sampling=scheme)
        for rep in range(reps):
            tasks.append((scheme_spec, rep, tuple(methods), params))
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_bench_worker, tasks))
    else:
        results = [_bench_worker(t) for t in tasks]
    out = {}
    idx = 0
    for scheme in schemes:
        label = SCHEME_LABELS.get(scheme, scheme)
        out[label] = {"results": results[idx: idx + reps],
                      "spec": replace(spec, sampling=scheme)}
        idx += reps
    return out


def cmd_benchmark(args) -> int:
    spec = _load_spec(args)
    out = _out_dir(args)
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    params = {
        "c1": args.c1, "c2": args.c2, "c_tilde": args.c_tilde,
        "epsilon0": args.epsilon0, "folds": args.folds,
        "max_iters": args.max_iters,
    }
    schemes = tuple(s.strip() for s in args.schemes.split(",") if s.strip())
    for s in schemes:
        if s not in SCHEME_LABELS:
            raise CliError(f"unknown sampling scheme {s!r}; use uniform or product")

    bench = run_benchmark(spec, args.reps, methods, params, jobs=args.jobs,
                          schemes=schemes)

    summary_rows = []
    n_failures = 0
    for label, block in bench.items():
        for method in methods:
            if method == "curve":
                continue
            errs = [r["errors"].get(method) for r in block["results"]]
            ok = [e for e in errs if e is not None]
            n_failures += sum(1 for e in errs if e is None)
            if ok:
                summary_rows.append((method, label, metrics.summarize(ok)))
        if "curve" in methods:
            points = []
            K = len(spec.contrasts)
            for k in range(K + 1):
                vals = [r["curve"][k] for r in block["results"]
                        if r["curve"] is not None and r["curve"][k] is not None]
                n_failures += sum(1 for r in block["results"]
                                  if r["curve"] is None or r["curve"][k] is None)
                s = metrics.summarize(vals)
                points.append((k, s.mean, s.sd))
            metrics.write_curve_csv(out / f"curve_{label.lower()}.csv", points)
    metrics.write_summary_csv(out / "summary.csv", summary_rows)

    with open(out / "run_report.txt", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"replications: {args.reps}\n")
        fh.write(f"schemes: {','.join(bench)}\n")
        fh.write(f"methods: {','.join(methods)}\n")
        fh.write(f"solver_failures: {n_failures}\n")
    print(f"benchmark complete: {args.reps} reps x {len(bench)} schemes, "
          f"{n_failures} solver failures")
    return 0


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------

def _parse_targets(raw, n_frames):
    out = []
    for chunk in raw.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        if "-" in chunk:
            lo, hi = chunk.split("-")
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(chunk))
    for t in out:
        if not (0 <= t < n_frames):
            raise CliError(f"target frame index {t} out of range (0..{n_frames - 1})")
    return out


def cmd_evaluate(args) -> int:
    if not args.config:
        raise CliError("evaluate needs --config FILE")
    cfg = data_io._read_kv(_resolve(args.config))
    frame_paths = [p for p in cfg.get("frames", "").split(",") if p]
    if not frame_paths:
        raise CliError("evaluate config needs a 'frames' list")
    frame_paths = [_resolve(p) for p in frame_paths]
    missing = [str(p) for p in frame_paths if not p.exists()]
    if missing:
        raise CliError(f"missing frames: {', '.join(missing)}")
    targets = _parse_targets(cfg.get("targets", "0"), len(frame_paths))
    half_width = int(cfg.get("half_width", 10))
    fraction = float(cfg.get("holdout_fraction", 0.2))
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    methods = [m.strip() for m in cfg.get("methods", "single,transmc,s-transmc").split(",")
               if m.strip()]
    frames = [data_io.read_frame(p) for p in frame_paths]
    a = float(cfg["a"]) if "a" in cfg else 1.05 * max(
        float(np.max(np.abs(f.values))) for f in frames if f.n
    )
    c1 = float(cfg.get("c1", args.c1))
    c2 = float(cfg.get("c2", args.c2))
    noise_sd = float(cfg["noise_sd"]) if "noise_sd" in cfg else None
    solver = SolverConfig(max_iters=args.max_iters)

    out = _out_dir(args)
    rows = []
    for t in targets:
        manifest = data_io.window_sources(frame_paths, t, half_width=half_width,
                                          holdout_fraction=fraction, seed=seed)
        train, test = data_io.holdout_split(frames[t], fraction, (seed, t))
        source_idx = [frame_paths.index(Path(p)) for p in manifest.sources]
        sources = [frames[i].to_dataset(task_id=j + 1)
                   for j, i in enumerate(source_idx)]
        policy = PenaltyPolicy(a=a, c1=c1, c2=c2, v=noise_sd)
        m = min(train.m1, train.m2)
        for method in methods:
            if method == "single":
                v = noise_sd
                if v is None:
                    v = estimate_noise_scale(train, a, solver)
                lam = theorem_penalty(c2, a, v, train.n, m)
                est = fit_single(train, lam, a, solver)
            elif method == "transmc":
                est = trans_mc(train, sources, policy, solver)
            elif method == "s-transmc":
                sel_cfg = SelectionConfig(J=args.folds, c_tilde=args.c_tilde,
                                          epsilon0=args.epsilon0, c0=c1, ck=c2,
                                          seed=(seed, 5, t))
                _, est = s_trans_mc(train, sources, sel_cfg, policy, solver)
            else:
                raise CliError(f"unknown method {method!r}")
            e, re = metrics.holdout_errors(est.matrix, test)
            rows.append((frames[t].frame_id, method, e, re))

    with open(out / "eval.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame", "method", "E", "RE"])
        for frame_id, method, e, re in rows:
            w.writerow([frame_id, method, f"{e:.12g}", f"{re:.12g}"])
    print(f"evaluated {len(targets)} frames x {len(methods)} methods -> {out / 'eval.csv'}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="transmc",
        description="Transfer learning for noisy low-rank matrix completion.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_out=True):
        p.add_argument("--config", help="scenario or evaluation config file")
        p.add_argument("--preset", help="named scenario preset")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--reps", type=int, default=1, help="replication count")
        p.add_argument("--jobs", type=int, default=1, help="worker processes")
        p.add_argument("--max-iters", type=int, default=500, dest="max_iters")
        p.add_argument("--a", type=float, default=None, help="entrywise box level")
        p.add_argument("--lam", type=float, default=None, help="explicit penalty")
        p.add_argument("--c1", type=float, default=DEFAULT_MULTIPLIER,
                       help="pooling penalty multiplier")
        p.add_argument("--c2", type=float, default=DEFAULT_MULTIPLIER,
                       help="debias / single-task penalty multiplier")
        p.add_argument("--c-tilde", type=float, default=2.0, dest="c_tilde",
                       help="selection threshold multiplier")
        p.add_argument("--epsilon0", type=float, default=None,
                       help="selection threshold floor")
        p.add_argument("--folds", type=int, default=4, help="cross-validation folds")
        p.add_argument("--noise-sd", type=float, default=None, dest="noise_sd",
                       help="known noise scale (skips the pilot estimate)")

    p = sub.add_parser("simulate", help="generate scenario datasets on disk")
    common(p)
    p.add_argument("--rep", type=int, default=0, help="replicate index to materialize")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="single-task nuclear-norm fit")
    common(p)
    p.add_argument("--data", help="samples or frame file")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("transfer", help="two-step transfer fit")
    common(p)
    p.add_argument("--target", help="target samples/frame file")
    p.add_argument("--sources", help="comma-separated source files")
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("select", help="informative-source selection + transfer fit")
    common(p)
    p.add_argument("--target", help="target samples/frame file")
    p.add_argument("--sources", help="comma-separated source files")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("benchmark", help="Monte-Carlo benchmark over a scenario")
    common(p)
    p.add_argument("--methods", default="single,transmc,s-transmc,curve",
                   help="comma list out of single,transmc,s-transmc,curve")
    p.add_argument("--schemes", default="uniform,product",
                   help="sampling schemes to run (uniform and/or product)")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("evaluate", help="holdout evaluation over a frame sequence")
    common(p)
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: invalid-invocation: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, data_io.ParseError) as exc:
        print(f"error: validation: {exc}", file=sys.stderr)
        return 2
    except SolverDivergedError as exc:
        print(f"error: solver-diverged: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
