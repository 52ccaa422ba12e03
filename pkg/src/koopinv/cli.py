"""Command-line front end: simulate, discover, verify, estimate-b, control, reproduce.

Exit codes: 0 success, 2 invalid input or configuration, 3 numerical failure
(divergence, degenerate or unidentifiable data), 4 failed acceptance checks in
``reproduce``.
"""

from __future__ import annotations

import argparse
import platform
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__, checks, kernels
from .actuation import ControlMatrixEstimate, estimate_B
from .bracket import BracketKind, involution_check
from .config import ExperimentConfig
from .control import ControlModel, run_closed_loop_ensemble
from .discovery import InvariantSubspace, discover_invariants, eigenfunction_residual, split_holdout
from .errors import DegenerateDataError, DivergenceError, InvalidArgumentError, KoopinvError, UnidentifiableError
from .features import build_dictionary, differentiate_trajectory
from .io import (
    read_json,
    read_trajectory_csv,
    write_closed_loop_csv,
    write_json,
    write_singular_values_csv,
    write_trajectory_csv,
)
from .systems import (
    TrajectoryDataset,
    integrate_ensemble,
    paper_forcing,
    sample_momentum_shell,
    sample_momentum_sphere,
    zero_forcing,
)

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL, EXIT_ACCEPTANCE = 0, 2, 3, 4
QUICK_COUNT = 10

# independent sampling streams per stage
SEED_OFFSET = {"simulate": 0, "actuation": 1, "control": 2}


class AcceptanceFailure(KoopinvError):
    def __init__(self, failed):
        self.failed = list(failed)
        super().__init__(f"{len(self.failed)} acceptance check(s) failed: {', '.join(self.failed)}")


class StageError(KoopinvError):
    def __init__(self, stage, exc):
        self.stage, self.cause = stage, exc
        super().__init__(f"stage '{stage}' failed: {exc}")


def _log(msg):
    print(msg, flush=True)


def _provenance(config):
    return {
        "seed": config.io.seed,
        "config": config.to_dict(),
        "config_hash": config.config_hash(),
        "versions": {
            "koopinv": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
            "kernel_backend": kernels.BACKEND,
        },
    }


def _initial_states(config, count, seed):
    spec = config.system_spec()
    lo, hi = config.simulation.radius_range
    if spec.kind == "rigid_body":
        return sample_momentum_shell(count, seed=seed, radii=(lo, hi))
    rng = np.random.default_rng(seed)
    return rng.uniform(lo, hi, size=(count, spec.state_dim)) * rng.choice([-1.0, 1.0], size=(count, spec.state_dim))


def _dictionary(config):
    return build_dictionary(config.system_spec().state_dim, config.dictionary.degree,
                            config.dictionary.include_constant)


def _load_subspace(path):
    return InvariantSubspace.from_json(read_json(path))


def _candidates(subspace, use_sparse=True):
    if use_sparse and subspace.sparse:
        return list(subspace.sparse)
    return subspace.columns()


def _load_data_dir(data_dir):
    data_dir = Path(data_dir)
    manifest_path = data_dir / "manifest.json"
    if not manifest_path.exists():
        raise InvalidArgumentError(f"{data_dir} has no manifest.json; run 'koopinv simulate' first")
    manifest = read_json(manifest_path)
    return manifest, [read_trajectory_csv(data_dir / f) for f in manifest["files"]]


# -- commands ---------------------------------------------------------------

def cmd_simulate(config, out_path, jobs=None):
    """One CSV per unforced trajectory plus ``manifest.json``."""
    out = Path(out_path)
    spec = config.system_spec()
    sim = config.simulation
    X0 = _initial_states(config, sim.count, config.io.seed + SEED_OFFSET["simulate"])
    data = integrate_ensemble(spec, X0, None, sim.t_end, sim.dt, sim.guard, jobs or config.io.jobs)
    files = []
    for i, ds in enumerate(data):
        name = f"traj_{i:03d}.csv"
        write_trajectory_csv(out / name, ds)
        files.append(name)
    manifest = _provenance(config)
    manifest.update({"kind": "unforced", "count": len(files), "rows": int(data[0].m), "files": files})
    write_json(out / "manifest.json", manifest)
    _log(f"simulate: wrote {len(files)} trajectories of {data[0].m} samples to {out}")
    return manifest


def cmd_discover(config, data_dir, out_path):
    """``subspace.json`` and ``singular_values.csv`` from a simulated data directory."""
    out = Path(out_path)
    _, data = _load_data_dir(data_dir)
    dis = config.discovery
    dic = _dictionary(config)
    res = discover_invariants(dic, data, dis.lam, dis.rank_tolerance, dis.holdout_fraction,
                              config.io.seed, dis.l1_weight, dis.max_iters)
    report = res.to_json()
    d = res.subspace.kernel_dimension
    report["message"] = (f"{d} invariant(s) found" if d else
                         f"no invariants found in the degree-{dic.degree} dictionary at lambda={dis.lam:g}")
    write_json(out / "subspace.json", report)
    write_singular_values_csv(out / "singular_values.csv", res.subspace.singular_values)
    s = res.subspace.singular_values
    _log(f"discover: {report['message']}; sigma_P/sigma_1 = {s[-1] / s[0]:.3g}")
    for v in res.sparse:
        _log(f"  {v!r}")
    return res


def _bracket_kind(config):
    spec = config.system_spec()
    if spec.kind == "rigid_body":
        return BracketKind.LIE_POISSON_SO3
    return BracketKind.CANONICAL if spec.state_dim % 2 == 0 else None


def cmd_verify(config, subspace_path, data_dir, out_path=None):
    """Involution matrix of the candidates and their residuals on held-out trajectories."""
    sub_json = read_json(subspace_path)
    subspace = InvariantSubspace.from_json(sub_json)
    _, data = _load_data_dir(data_dir)
    dis = config.discovery
    cands = _candidates(subspace, config.control.use_sparse)
    labels = [f"C{i + 1}" for i in range(len(cands))]

    hold = sub_json.get("holdout_trajectories")
    if hold is None:
        _, hold = split_holdout(len(data), dis.holdout_fraction, config.io.seed)
    hold_data = [data[i] for i in hold] or data

    rows = []
    for lab, c in zip(labels, cands):
        r = eigenfunction_residual(subspace.dictionary, c, hold_data, subspace.lam)
        rows.append({"label": lab, "function": repr(c), "holdout_rms": r,
                     "status": "PASS" if r <= dis.residual_tolerance else "FAIL"})

    kind = _bracket_kind(config)
    report = {"labels": labels, "residuals": rows, "residual_tolerance": dis.residual_tolerance,
              "involution_tolerance": dis.involution_tolerance,
              "bracket": None if kind is None else kind.value}
    ok = all(r["status"] == "PASS" for r in rows)
    if kind is not None and cands:
        X = np.vstack([ds.states for ds in data])
        M = involution_check(kind, cands, X)
        off = float(np.max(M[~np.eye(len(cands), dtype=bool)])) if len(cands) > 1 else 0.0
        report.update({"matrix": M.tolist(), "max_offdiagonal": off})
        ok &= off <= dis.involution_tolerance
    report["status"] = "PASS" if ok else "FAIL"
    if out_path is not None:
        write_json(Path(out_path) / "involution.json", report)
    _log(f"verify: {report['status']}")
    for r in rows:
        _log(f"  {r['label']}: holdout residual {r['holdout_rms']:.3g} {r['status']}")
    if "max_offdiagonal" in report:
        _log(f"  max RMS bracket {report['max_offdiagonal']:.3g}")
    return report


def _forced_data(config, forced_paths, jobs):
    act = config.actuation
    spec = config.system_spec()
    if forced_paths:
        data = [read_trajectory_csv(p) for p in forced_paths]
        for p, ds in zip(forced_paths, data):
            if ds.inputs is None:
                raise InvalidArgumentError(f"forced CSV {p} has no input columns u1..uq; cannot estimate B")
    else:
        forcing = paper_forcing() if act.forcing == "multisine" else zero_forcing(spec.input_dim)
        if forcing.dim != spec.input_dim:
            raise InvalidArgumentError("forcing dimension does not match the system input dimension")
        X0 = _initial_states(config, act.count, config.io.seed + SEED_OFFSET["actuation"])
        data = integrate_ensemble(spec, X0, forcing, act.t_end, config.simulation.dt,
                                  config.simulation.guard, jobs)
    if act.derivatives == "numerical" or any(ds.derivatives is None for ds in data):
        data = [TrajectoryDataset(ds.times, ds.states, differentiate_trajectory(ds.times, ds.states),
                                  ds.inputs, "central2") for ds in data]
    return data


def cmd_estimate_b(config, subspace_path, out_path, forced_paths=None, jobs=None):
    """``B_hat.json`` from forced data and the identified eigenfunctions."""
    out = Path(out_path)
    subspace = _load_subspace(subspace_path)
    if subspace.kernel_dimension == 0:
        raise InvalidArgumentError("subspace is empty; nothing to regress on")
    data = _forced_data(config, forced_paths, jobs or config.io.jobs)
    if not forced_paths:
        for i, ds in enumerate(data):
            write_trajectory_csv(out / "forced" / f"forced_{i:03d}.csv", ds)
    est = estimate_B(subspace.dictionary, subspace, data, subspace.lam)
    report = est.to_json()
    report["derivatives"] = data[0].derivative_scheme
    report["source"] = [str(p) for p in forced_paths] if forced_paths else "simulated"
    if not forced_paths:
        B_true = config.system_spec().control_matrix
        report["max_abs_error"] = float(np.max(np.abs(est.B_hat - B_true)))
    write_json(out / "B_hat.json", report)
    _log(f"estimate-b: residual {est.residual_rms:.3g}, condition {est.regressor_condition:.3g}")
    if "max_abs_error" in report:
        _log(f"  max |B_hat - B| = {report['max_abs_error']:.3g}")
    return est


def _summary(results, baseline, config):
    ctl = config.control
    traj = []
    for i, (r, b) in enumerate(zip(results, baseline)):
        traj.append({
            "index": i,
            "x0": r.states[0].tolist(),
            "converged": bool(r.converged),
            "final_error": r.final_error.tolist(),
            "final_distance": r.final_distance,
            "within_distance": bool(r.final_distance <= ctl.distance_tolerance),
            "settling_time": None if np.isnan(r.settling_time) else r.settling_time,
            "cumulative_cost": r.cumulative_cost,
            "baseline_cost": b.cumulative_cost,
            "baseline_C_drift": float(np.max(np.ptp(b.coordinates, axis=0))),
        })
    # unsettled runs count as t_end, so the mean is a lower bound when any are censored
    settle = [ctl.t_end if t["settling_time"] is None else t["settling_time"] for t in traj]
    return {
        "count": len(traj),
        "converged": sum(t["converged"] for t in traj),
        "within_distance": sum(t["within_distance"] for t in traj),
        "tolerance": ctl.tolerance,
        "distance_tolerance": ctl.distance_tolerance,
        "reference_state": ctl.reference_state,
        "C_reference": results[0].reference.tolist() if results else [],
        "max_final_error": max((max(t["final_error"]) for t in traj), default=0.0),
        "max_final_distance": max((t["final_distance"] for t in traj), default=0.0),
        "settled": sum(t["settling_time"] is not None for t in traj),
        "mean_settling_time": float(np.mean(settle)) if settle else None,
        "settling_censored_at": ctl.t_end,
        "max_baseline_C_drift": max((t["baseline_C_drift"] for t in traj), default=0.0),
        "trajectories": traj,
    }


def cmd_control(config, subspace_path, b_path, out_path, jobs=None, B_override=None, baseline=True):
    """Closed-loop runs over the sphere ensemble plus unforced baselines."""
    out = Path(out_path)
    subspace = _load_subspace(subspace_path)
    if subspace.kernel_dimension == 0:
        raise InvalidArgumentError("subspace is empty; no coordinates to control")
    B = B_override if B_override is not None else ControlMatrixEstimate.from_json(read_json(b_path)).B_hat
    ctl = config.control
    spec = config.system_spec()
    mpc = config.mpc_config()
    model = ControlModel(subspace.dictionary, _candidates(subspace, ctl.use_sparse), B, spec)
    if mpc.Q.shape[0] != model.d:
        raise InvalidArgumentError(f"control.Q is {mpc.Q.shape[0]}x{mpc.Q.shape[0]} but there are {model.d} coordinates")
    if mpc.R.shape[0] != spec.input_dim:
        raise InvalidArgumentError(f"control.R must be {spec.input_dim}x{spec.input_dim}")
    if spec.kind == "rigid_body":
        X0 = sample_momentum_sphere(ctl.L_value, ctl.count, seed=config.io.seed + SEED_OFFSET["control"])
    else:
        X0 = _initial_states(config, ctl.count, config.io.seed + SEED_OFFSET["control"])
    jobs = jobs or config.io.jobs

    t0 = time.perf_counter()
    results = run_closed_loop_ensemble(spec, mpc, model, X0, ctl.t_end, ctl.tolerance, True, jobs)
    elapsed = time.perf_counter() - t0
    base = run_closed_loop_ensemble(spec, mpc, model, X0, ctl.t_end, ctl.tolerance, False, jobs) if baseline else []
    for i, r in enumerate(results):
        write_closed_loop_csv(out / "closed_loop" / f"traj_{i:03d}.csv", r)
    for i, b in enumerate(base):
        write_closed_loop_csv(out / "baseline" / f"traj_{i:03d}.csv", b)
    summary = _summary(results, base if baseline else results, config)
    if not baseline:
        for t in summary["trajectories"]:
            t["baseline_cost"] = t["baseline_C_drift"] = None
        summary["max_baseline_C_drift"] = None
    summary["B"] = np.asarray(B).tolist()
    summary["elapsed_seconds"] = elapsed
    write_json(out / "summary.json", summary)
    _log(f"control: C converged {summary['converged']}/{summary['count']}, "
         f"within {ctl.distance_tolerance:g} of +-Pi* {summary['within_distance']}/{summary['count']}, "
         f"{elapsed:.1f}s")
    return results, elapsed, summary


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (KoopinvError, ValueError, ArithmeticError) as exc:
        raise StageError(name, exc) from exc


def cmd_reproduce(config, out_dir, quick=False, jobs=None):
    """Full pipeline with pass/fail checks written to ``REPORT.md``."""
    out = Path(out_dir)
    cfg = config.copy()
    if quick:
        cfg.simulation.count = QUICK_COUNT
        cfg.control.count = QUICK_COUNT
    if cfg.system.kind != "rigid_body":
        raise InvalidArgumentError("reproduce runs the rigid-body experiment")
    inertia = tuple(cfg.system.inertia)
    seed = cfg.io.seed
    jobs = jobs or cfg.io.jobs

    _stage("simulate", cmd_simulate, cfg, out / "data", jobs)
    res, t_disc = checks.timed(_stage, "discover", cmd_discover, cfg, out / "data", out / "discovery")
    sub_path = out / "discovery" / "subspace.json"
    inv = _stage("verify", cmd_verify, cfg, sub_path, out / "data", out / "discovery")
    est = _stage("estimate-b", cmd_estimate_b, cfg, sub_path, out / "actuation", None, jobs)
    b_path = out / "actuation" / "B_hat.json"
    true_B = cfg.system_spec().control_matrix
    res_a, t_a, _ = _stage("control", cmd_control, cfg, sub_path, None, out / "control_true_B", jobs,
                           B_override=true_B, baseline=False)
    res_b, t_b, _ = _stage("control", cmd_control, cfg, sub_path, b_path, out / "control", jobs)

    X = np.vstack([read_trajectory_csv(p).states for p in sorted((out / "data").glob("traj_*.csv"))])
    sub = res.subspace
    results = [
        checks.check_kernel(sub, t_disc),
        checks.check_span(sub, inertia),
        checks.check_sparse_L(res.sparse, sub.dictionary, inertia),
        checks.check_involution(np.asarray(inv.get("matrix", [[0.0]])), cfg.discovery.involution_tolerance),
        checks.check_bracket_discovery(sub.dictionary, inertia, X),
        checks.check_vector_field(inertia, seed),
        checks.check_B(est.B_hat, true_B, sub.dictionary, sub, inertia, seed),
        checks.check_closed_loop(res_a, t_a, "a", cfg.control.tolerance, cfg.control.distance_tolerance),
        checks.check_closed_loop(res_b, t_b, "b", cfg.control.tolerance, cfg.control.distance_tolerance),
        checks.check_properties(inertia, seed),
        checks.check_nonzero_lambda(seed),
    ]
    _write_report(out / "REPORT.md", cfg, results, quick)
    for r in results:
        _log(r.line())
    failed = [r.key for r in results if not r.passed]
    if failed:
        raise AcceptanceFailure(failed)
    return results


def _write_report(path, cfg, results, quick):
    prov = _provenance(cfg)
    lines = [
        "# Reproduction report",
        "",
        f"- seed: {prov['seed']}",
        f"- config hash: `{prov['config_hash']}`",
        f"- ensemble size: {cfg.simulation.count} (discovery), {cfg.control.count} (control)"
        + (" [quick mode]" if quick else ""),
        f"- versions: " + ", ".join(f"{k} {v}" for k, v in prov["versions"].items()),
        "",
        "| # | check | measured | threshold | status |",
        "|---|-------|----------|-----------|--------|",
    ]
    for r in results:
        lines.append(f"| {r.key} | {r.description} | {r.measured} | {r.threshold} | {'PASS' if r.passed else 'FAIL'} |")
    n_pass = sum(r.passed for r in results)
    lines += ["", f"{n_pass}/{len(results)} checks passed.", ""]
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines))


# -- argument parsing -------------------------------------------------------

def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON experiment config (defaults when omitted)")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--seed", type=int, help="override io.seed")
    common.add_argument("--jobs", type=int, help="worker processes for ensemble loops")
    common.add_argument("--quick", action="store_true", help="ensembles of %d trajectories" % QUICK_COUNT)

    p = argparse.ArgumentParser(prog="koopinv", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"koopinv {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="integrate the unforced ensemble")
    d = sub.add_parser("discover", parents=[common], help="identify conserved quantities")
    d.add_argument("--data", type=Path, required=True, help="directory written by simulate")
    v = sub.add_parser("verify", parents=[common], help="involution and holdout residual checks")
    v.add_argument("--subspace", type=Path, required=True)
    v.add_argument("--data", type=Path, required=True)
    e = sub.add_parser("estimate-b", parents=[common], help="identify the control matrix")
    e.add_argument("--subspace", type=Path, required=True)
    e.add_argument("--forced", type=Path, nargs="+", help="forced trajectory CSVs (simulated when omitted)")
    c = sub.add_parser("control", parents=[common], help="closed-loop MPC over the ensemble")
    c.add_argument("--subspace", type=Path, required=True)
    c.add_argument("--b", type=Path, required=True, help="B_hat.json from estimate-b")
    sub.add_parser("reproduce", parents=[common], help="full pipeline with acceptance report")
    return p


def _configure(args):
    cfg = ExperimentConfig.load(args.config)
    if args.seed is not None:
        if args.seed < 0:
            raise InvalidArgumentError("--seed must be non-negative")
        cfg.io.seed = args.seed
    if args.jobs is not None:
        if args.jobs < 1:
            raise InvalidArgumentError("--jobs must be >= 1")
        cfg.io.jobs = args.jobs
    if args.quick and args.command != "reproduce":
        cfg.simulation.count = min(cfg.simulation.count, QUICK_COUNT)
        cfg.control.count = min(cfg.control.count, QUICK_COUNT)
        cfg.actuation.count = min(cfg.actuation.count, QUICK_COUNT)
    out = args.out or (Path(cfg.io.out_dir) if cfg.io.out_dir else None)
    if out is None:
        raise InvalidArgumentError("no output directory; pass --out or set io.out_dir")
    return cfg, out


def run(argv=None):
    args = _parser().parse_args(argv)
    cfg, out = _configure(args)
    jobs = cfg.io.jobs
    if args.command == "simulate":
        cmd_simulate(cfg, out, jobs)
    elif args.command == "discover":
        cmd_discover(cfg, args.data, out)
    elif args.command == "verify":
        cmd_verify(cfg, args.subspace, args.data, out)
    elif args.command == "estimate-b":
        cmd_estimate_b(cfg, args.subspace, out, args.forced, jobs)
    elif args.command == "control":
        cmd_control(cfg, args.subspace, args.b, out, jobs)
    elif args.command == "reproduce":
        cmd_reproduce(cfg, out, args.quick, jobs)
    return EXIT_OK


def _exit_code(exc):
    cause = exc.cause if isinstance(exc, StageError) else exc
    if isinstance(exc, AcceptanceFailure):
        return EXIT_ACCEPTANCE
    if isinstance(cause, (DivergenceError, DegenerateDataError, UnidentifiableError, ArithmeticError)):
        return EXIT_NUMERICAL
    return EXIT_INVALID


def main(argv=None):
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return run(argv)
    except AcceptanceFailure as exc:
        print(f"koopinv: {exc}", file=sys.stderr)
        return EXIT_ACCEPTANCE
    except (KoopinvError, ValueError, ArithmeticError, OSError) as exc:
        print(f"koopinv: error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
