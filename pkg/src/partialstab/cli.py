"""
Command-line front end.

Exit codes
----------
0  success
2  invalid configuration or arguments
3  an assumption failed (machine-readable JSON reason on stderr)
4  partial failure: some sweep points or checks failed, outputs still written
5  total failure: nothing usable was produced
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from ._validation import AssumptionViolation, ConvergenceError
from .config import ConfigError, load_config

log = logging.getLogger("partialstab")

EXIT_OK, EXIT_CONFIG, EXIT_ASSUMPTION, EXIT_PARTIAL, EXIT_TOTAL = 0, 2, 3, 4, 5


def _writer(path):
    fh = open(path, "w", newline="")
    return fh, csv.writer(fh, lineterminator="\n")


def _grid(cfg):
    from .geometry import grid_from_spec

    return grid_from_spec(cfg.grid_spec())


def _potential(cfg, grid, spec):
    from .fields import zero_potential
    from .potentials import make_family, on_grid, read_potential

    if spec == "zero":
        return zero_potential(grid, s=cfg.s)
    if spec.startswith("file:"):
        return read_potential(cfg.resolve(spec[5:]), s=cfg.s)
    if spec.startswith("gaussian"):
        return on_grid(make_family("gaussian", amplitude=cfg.amplitude), grid, s=cfg.s, name=spec)
    raise ConfigError(f"unknown forward.potential {spec!r}")


def build_pairs(cfg, grid):
    """``[(name, q1, q2)]`` for the configured pair family (deterministic in ``seed``)."""
    from .fields import zero_potential
    from .potentials import GaussianBump, TrigMode, on_grid, read_potential

    q0 = zero_potential(grid, s=cfg.s)
    if cfg.family == "trig":
        out = []
        for k in cfg.wavenumbers:
            kv = (k / np.sqrt(2), k / np.sqrt(2), 0.0)[: grid.n]
            q = on_grid(TrigMode(cfg.amplitude, kv, 0.0, cfg.envelope_width), grid, s=cfg.s, name=f"trig_k{k:g}")
            out.append((f"trig_k{k:g}", q0, q))
        return out
    if cfg.family == "gaussian":
        rng = np.random.default_rng(cfg.seed)
        out = []
        for i in range(cfg.count):
            c = tuple(rng.uniform(-0.15, 0.15, grid.n))
            f = GaussianBump(cfg.amplitude * rng.uniform(0.2, 1.0), c, float(rng.uniform(0.08, 0.2)))
            out.append((f"gauss_{i}", q0, on_grid(f, grid, s=cfg.s, name=f"gauss_{i}")))
        return out
    if cfg.family == "identical":
        q = on_grid(GaussianBump(cfg.amplitude, (0.0,) * grid.n, 0.15), grid, s=cfg.s, name="bump")
        return [(f"identical_{i}", q, q) for i in range(cfg.count)]
    return [(f"{Path(a).stem}-{Path(b).stem}", read_potential(cfg.resolve(a), s=cfg.s),
             read_potential(cfg.resolve(b), s=cfg.s)) for a, b in cfg.pair_files]


def _outdir(cfg):
    d = Path(cfg.output_dir)
    if not d.is_absolute() and cfg.source:
        d = Path(cfg.source).parent / d
    d.mkdir(parents=True, exist_ok=True)
    return d


def _cache(cfg, args):
    from .records import RecordCache

    path = args.cache or cfg.cache_dir
    return RecordCache(path) if path else None


# --- subcommands --------------------------------------------------------------------

def cmd_forward(cfg, args):
    from .forward import HelmholtzSolver, neumann_trace
    from .potentials import write_grid_field

    grid = _grid(cfg)
    q = _potential(cfg, grid, cfg.forward_potential)
    fc = grid.face_centers
    alpha = np.asarray(cfg.alpha[: grid.n])
    if cfg.forward_data == "linear":
        f = fc @ alpha
    elif cfg.forward_data == "plane_wave":
        f = np.cos(cfg.forward_omega * (fc @ alpha))
    else:
        raise ConfigError(f"unknown forward.data {cfg.forward_data!r}")
    solver = HelmholtzSolver(grid, q, cfg.forward_omega, c_small=cfg.c_small)
    u = solver.solve(f)
    out = _outdir(cfg)
    write_grid_field(out / "forward_u.txt", grid, u)
    fh, w = _writer(out / "forward_trace.csv")
    with fh:
        w.writerow(["face"] + ["x", "y", "z"][: grid.n] + ["nx", "ny", "nz"][: grid.n] + ["area", "f", "dnu"])
        dn = neumann_trace(grid, u, f, scheme="one_sided")
        for i in range(grid.n_faces):
            w.writerow([i] + [repr(float(v)) for v in fc[i]] + [repr(float(v)) for v in grid.face_normals[i]]
                       + [repr(float(grid.face_area[i])), repr(float(f[i])), repr(float(dn[i]))])
    print(f"forward: residual {solver.residual(u, f):.3e}, condition ~{solver.condition:.3e}")
    return EXIT_OK


def cmd_dnmap(cfg, args):
    from .dnmap import cached_build_dn, export_dn, export_dn_csv

    grid = _grid(cfg)
    q = _potential(cfg, grid, cfg.forward_potential)
    dn = cached_build_dn(_cache(cfg, args), grid, q, cfg.forward_omega, n_jobs=args.jobs, c_small=cfg.c_small)
    out = _outdir(cfg)
    export_dn(dn, out / "dn.pstb")
    export_dn_csv(dn, out / "dn.csv")
    print(f"dnmap: {dn.matrix.shape[0]} faces, symmetry defect {dn.symmetry_defect():.2e}")
    return EXIT_OK


def cmd_cgo_check(cfg, args):
    from .cgo import (CGO_CONSTANTS, CGOCalibrator, analytic_hs_norm, calibration_suite, make_zeta_pair,
                      remainder_ratio, solve_cgo)

    out = _outdir(cfg)
    if args.calibrate:
        cal = CGOCalibrator(N=cfg.cgo_N, lambdas=np.geomspace(0.05, 1e3, 30)).fit(calibration_suite(seed=cfg.seed))
        print(f"cgo calibration: C1 = {cal.C1_:.4g}, C2 = {cal.C2_:.4g}")
    q = calibration_suite(1, seed=cfg.seed)[0]
    qn = analytic_hs_norm(q, 2, cfg.cgo_N)
    fh, w = _writer(out / "cgo_check.csv")
    rows, failures = [], 0
    with fh:
        w.writerow(["lambda", "zeta_abs", "iterations", "residual", "r_hs", "ratio", "bound_ok"])
        for lam in cfg.cgo_lambdas:
            pair = make_zeta_pair(np.array([0.0, 0.0, 1.0]), np.eye(3)[0], np.eye(3)[1], lam, cfg.forward_omega)
            sol, pair = solve_cgo(q, pair, N=cfg.cgo_N, tol=cfg.tol)
            ratio = remainder_ratio(sol, qn)
            ok = ratio <= CGO_CONSTANTS["C1"]
            failures += not ok
            rows.append((float(np.linalg.norm(pair.zeta1)), sol.hs_norm(2)))
            w.writerow([repr(lam), repr(float(np.linalg.norm(pair.zeta1))), sol.iterations, repr(sol.residual),
                        repr(sol.hs_norm(2)), repr(ratio), int(ok)])
    z, r = np.log(np.array(rows)).T
    slope = float(np.polyfit(z, r, 1)[0]) if len(rows) > 1 else float("nan")
    print(f"cgo-check: remainder decay slope {slope:.3f}, bound failures {failures}")
    return EXIT_PARTIAL if failures else EXIT_OK


def cmd_carleman_check(cfg, args):
    from .carleman import (CarlemanCalibrator, calibration_family, evaluate_carleman, export_reports_csv,
                           random_test_fields)
    from .fields import zero_potential

    grid = _grid(cfg)
    q = zero_potential(grid, s=cfg.s)
    omegas = cfg.omega_grid
    cal = CarlemanCalibrator(grid, q, omegas=omegas, alpha=cfg.alpha[: grid.n]).fit(
        calibration_family(grid, seed=cfg.seed))
    lam = cal.lambda_factor * cal.lambda0_
    reports = []
    for i, u in enumerate(random_test_fields(grid, cfg.carleman_n_test, seed=cfg.seed + 1)):
        for w in omegas:
            reports.append(evaluate_carleman(grid, q, w, lam, np.asarray(cal._alpha()), u, C=cal.C_,
                                             field_id=f"f{i:03d}"))
    export_reports_csv(reports, _outdir(cfg) / "carleman.csv")
    frac = np.mean([r.slack >= 0 for r in reports])
    print(f"carleman-check: C = {cal.C_:.4g}, lambda0 = {cal.lambda0_:.4g}, slack >= 0 on {frac:.1%}")
    return EXIT_OK if frac >= 0.99 else EXIT_PARTIAL


def cmd_fourier_recon(cfg, args):
    from .dnmap import BoundaryNormCalculus, build_dn
    from .fourier import estimate_fourier_mode, export_modes_csv, reconstruct, xi_alpha_plan
    from .geometry import partition_boundary
    from .potentials import write_grid_field

    grid = _grid(cfg)
    pairs = build_pairs(cfg, grid)
    name, q1, q2 = pairs[min(1, len(pairs) - 1)]
    diff = build_dn(grid, q1, cfg.forward_omega, c_small=cfg.c_small) - build_dn(grid, q2, cfg.forward_omega,
                                                                                  c_small=cfg.c_small)
    calc = BoundaryNormCalculus(grid)
    step, top = cfg.fourier_xi_step, cfg.fourier_xi_max
    ax = np.arange(-top, top + 1e-9, step)
    xis = np.array([x for x in np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), -1).reshape(-1, 3)
                    if np.linalg.norm(x) <= min(top, cfg.fourier_lambda)])
    ests = []
    for xi, alpha in zip(xis, xi_alpha_plan(xis, np.asarray(cfg.alpha))):
        part = partition_boundary(grid, alpha, cfg.epsilon)
        ests.append(estimate_fourier_mode(grid, xi, cfg.fourier_lambda, cfg.forward_omega, diff, part,
                                          C=cfg.C_stab, q1=q1, q2=q2, calc=calc))
    out = _outdir(cfg)
    export_modes_csv(ests, out / "fourier_modes.csv")
    rec = reconstruct(grid, xis, [e.value for e in ests], step)
    write_grid_field(out / "fourier_recon.txt", grid, rec)
    print(f"fourier-recon: {len(ests)} modes for pair {name}")
    return EXIT_OK


def _settings(cfg):
    from .stability import SweepSettings

    return SweepSettings(omegas=cfg.omega_grid, alpha=cfg.alpha, epsilon=cfg.epsilon, theta=cfg.theta, s=cfg.s,
                         M=cfg.M, lambda0=cfg.lambda0, C2M=cfg.C2M, margin=cfg.margin, C_stab=cfg.C_stab,
                         c_small=cfg.c_small, norm_method=cfg.norm_method)


def cmd_sweep(cfg, args):
    from .stability import fit_beta, run_sweep, write_records_csv, write_summary_csv, write_svg

    grid = _grid(cfg)
    pairs = build_pairs(cfg, grid)
    cache = _cache(cfg, args)
    records = run_sweep(grid, pairs, _settings(cfg), cache=cache)
    out = _outdir(cfg)
    write_records_csv(records, out / "records.csv")
    betas = fit_beta(records)
    write_summary_csv(betas, out / "summary.csv")
    if cfg.svg:
        write_svg(records, out / "sweep.svg")
    if cache is not None:
        (out / "cache_stats.json").write_text(json.dumps(
            {"hits": cache.hits, "misses": cache.misses, "corrupt": cache.corrupt}, sort_keys=True) + "\n")
        print(f"sweep: cache hits {cache.hits}, misses {cache.misses}, corrupt {cache.corrupt}")
    failed = sum(bool(r.error) for r in records)
    print(f"sweep: {len(records)} points, {failed} failed; beta = "
          + ", ".join(f"{w:g}:{b[0]:.3f}" for w, b in sorted(betas.items())))
    if failed == len(records):
        return EXIT_TOTAL
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_verify(cfg, args):
    """Fast property suite on the configured grid; writes ``verify_report.csv``."""
    from .carleman import CarlemanCalibrator, calibration_family, random_test_fields
    from .cgo import CGO_CONSTANTS, analytic_hs_norm, calibration_suite, make_zeta_pair, remainder_ratio, solve_cgo
    from .fields import zero_potential
    from .fourier import green_identity_residual
    from .potentials import GaussianBump, on_grid
    from .stability import chain_report, schedule_params

    grid = _grid(cfg)
    rng = np.random.default_rng(cfg.seed)
    checks = []  # (name, value, threshold, passed)

    # zeta algebra
    worst = 0.0
    for _ in range(200):
        xi = rng.normal(size=3)
        a = rng.normal(size=3)
        a -= (a @ xi) / (xi @ xi) * xi
        a /= np.linalg.norm(a)
        b = np.cross(xi, a)
        b /= np.linalg.norm(b)
        lam, om = rng.uniform(1, 50), rng.uniform(1.01, 30)
        worst = max(worst, *make_zeta_pair(xi, a, b, lam, om).invariant_errors())
    checks.append(("zeta_algebra_max_error", worst, 1e-8, worst < 1e-8))

    # CGO remainder bound
    q = calibration_suite(1, seed=cfg.seed)[0]
    qn = analytic_hs_norm(q)
    for lam in (10.0, 40.0):
        pair = make_zeta_pair(np.array([0.0, 0.0, 1.0]), np.eye(3)[0], np.eye(3)[1], lam, 2.0)
        sol, _ = solve_cgo(q, pair)
        r = remainder_ratio(sol, qn)
        checks.append((f"cgo_ratio_lambda{lam:g}", r, CGO_CONSTANTS["C1"], r <= CGO_CONSTANTS["C1"]))
        checks.append((f"cgo_residual_lambda{lam:g}", sol.residual, 1e-8, sol.residual < 1e-8))

    # Carleman
    q0 = zero_potential(grid, s=cfg.s)
    cal = CarlemanCalibrator(grid, q0, omegas=cfg.omega_grid).fit(calibration_family(grid, seed=cfg.seed))
    S = cal.transform(random_test_fields(grid, 40, seed=cfg.seed + 1))
    frac = float(np.mean(S >= 0))
    checks.append(("carleman_fraction_slack_nonneg", frac, 0.99, frac >= 0.99))

    # Green identity
    q1 = on_grid(GaussianBump(3.0, (0.1, 0, 0), 0.15), grid, s=cfg.s)
    q2 = on_grid(GaussianBump(-2.0, (-0.1, 0.1, 0), 0.12), grid, s=cfg.s)
    pair = make_zeta_pair(np.array([0, 0, 2.0]), np.eye(3)[0], np.array([0, -1.0, 0]), 2.0, 2.0)
    try:
        res = green_identity_residual(grid, q1, q2, 2.0, pair)
        checks.append(("green_identity_residual", res, 0.1, res < 0.1))
    except (AssumptionViolation, ConvergenceError) as exc:
        checks.append(("green_identity_residual", float("nan"), 0.1, False))
        log.warning("green identity check failed: %s", exc)

    # schedule chain
    bad = 0
    for _ in range(200):
        om = rng.uniform(1.1, 50)
        base = schedule_params(om, 1.0, check=False)
        lg = base.log_delta * (1 + rng.uniform(0, 5))
        sp = schedule_params(om, 0.0, log_gap=lg, check=False)
        bad += not all(ok for *_, ok in chain_report(sp))
    checks.append(("schedule_chain_failures", float(bad), 0.0, bad == 0))

    out = _outdir(cfg)
    fh, w = _writer(out / "verify_report.csv")
    with fh:
        w.writerow(["check", "value", "threshold", "margin", "passed"])
        for name, val, thr, ok in checks:
            w.writerow([name, repr(float(val)), repr(float(thr)), repr(float(thr - val)), int(ok)])
    for name, val, thr, ok in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {val:.4g} (threshold {thr:g})")
    return EXIT_OK if all(c[3] for c in checks) else EXIT_PARTIAL


def cmd_report(cfg, args):
    """Rebuild summary CSV and plot from an existing ``records.csv``."""
    from .stability import StabilityRecord, fit_beta, write_summary_csv, write_svg

    out = _outdir(cfg)
    path = out / "records.csv"
    if not path.exists():
        print(f"report: {path} not found", file=sys.stderr)
        return EXIT_TOTAL
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    recs = [StabilityRecord(pair=r["pair"], omega=float(r["omega"]), dn_gap=float(r["dn_gap"]),
                            hminus1=float(r["hminus1"]), linfty=float(r["linfty"]), l2=float(r["l2"]),
                            regime=r["regime"], error=r["error"]) for r in rows]
    betas = fit_beta(recs)
    write_summary_csv(betas, out / "summary.csv")
    if cfg.svg:
        write_svg(recs, out / "sweep.svg")
    print("report: beta = " + ", ".join(f"{w:g}:{b[0]:.3f}" for w, b in sorted(betas.items())))
    return EXIT_OK


COMMANDS = {
    "forward": cmd_forward,
    "dnmap": cmd_dnmap,
    "cgo-check": cmd_cgo_check,
    "carleman-check": cmd_carleman_check,
    "fourier-recon": cmd_fourier_recon,
    "sweep": cmd_sweep,
    "verify": cmd_verify,
    "report": cmd_report,
}


def build_parser():
    p = argparse.ArgumentParser(prog="partialstab", description=__doc__.strip().splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--jobs", type=int, default=1, help="worker threads for DN assembly")
    p.add_argument("--cache", help="directory for cached DN records")
    p.add_argument("--seed", type=int, help="override the config seed (unsigned 64-bit)")
    p.add_argument("--output", help="override output_dir")
    p.add_argument("--calibrate", action="store_true", help="cgo-check: rerun the constant calibration")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2 ** 64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            cfg.seed = args.seed
        if args.output:
            cfg.output_dir = args.output
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    t0 = time.perf_counter()
    try:
        code = COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(json.dumps({"error": "validation", "message": str(exc)}), file=sys.stderr)
        return EXIT_CONFIG
    except AssumptionViolation as exc:
        print(json.dumps({"error": "assumption", "reason": exc.reason, "message": str(exc),
                          "context": exc.context}, default=str), file=sys.stderr)
        return EXIT_ASSUMPTION
    except ConvergenceError as exc:
        print(json.dumps({"error": "convergence", "message": str(exc)}), file=sys.stderr)
        return EXIT_TOTAL
    log.info("%s finished in %.1fs", args.command, time.perf_counter() - t0)
    return code


if __name__ == "__main__":
    sys.exit(main())
