"""``evodiff`` command line: run, check, lyapunov, dual-check, kernel, convergence, export.

Exit codes: 0 ok, 1 error, 2 blow-up detected.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import diagnostics as diag
from . import kernel as kern
from .config import RunManifest, load_config
from .errors import ConfigError, EvodiffError
from .grid import Grid
from .growth import GrowthLaw, verify_bounds
from .io import EXPORTS, export_plotdata, read_diagnostics_csv, read_snapshots, write_trajectory
from .models import (
    builtin,
    check_compatibility,
    check_intermediate_sums,
    check_polynomial_bound,
    check_quasi_positivity,
    check_VL,
)
from .solver import CASES, manufactured_convergence, run

log = logging.getLogger("evodiff")


def _threads():
    value = os.environ.get("EVODIFF_THREADS")
    if not value:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=max(1, int(value)))


def _r(x):
    return repr(float(x))


def _emit(obj):
    print(json.dumps(obj, indent=2, default=float))


def cmd_run(args):
    cfg = load_config(args.config)
    out = Path(args.out or cfg.output.directory)
    if not out.is_absolute() and args.out is None:
        out = cfg.base_dir / out
    traj = run(cfg.run_config())
    write_trajectory(traj, out)
    RunManifest.from_run(cfg, traj).write(out / "manifest.json")
    print(f"{traj.termination}: t={traj.final.t:.6g} steps={traj.steps} {traj.message}".rstrip())
    print(f"output written to {out}")
    return traj.exit_code


def cmd_check(args):
    cfg = load_config(args.config)
    model = cfg.build_model()
    law = cfg.build_law()
    grid = cfg.build_grid()
    reports = [check_quasi_positivity(model, samples=args.samples)]
    meta = model.meta
    b = meta.b if meta is not None and meta.b is not None else None
    reports.append(check_intermediate_sums(model, b, samples=args.samples))
    if meta is not None and meta.K is not None and model.m >= 2:
        K = meta.K
        a_vectors = [tuple([K * s] * (model.m - 1) + [1.0]) for s in (1.0, 2.0, 4.0)]
        reports.append(check_VL(model, K, a_vectors, samples=args.samples))
    reports.append(check_polynomial_bound(model, samples=args.samples))
    bounds = verify_bounds(law, t1=cfg.time.t_end)
    mismatch, ok = check_compatibility(model, cfg.initial_data(grid), grid, law)
    _emit({
        "config": str(args.config),
        "conditions": [r.as_dict() for r in reports],
        "growth_bounds": bounds.__dict__ | {"k1_relaxed": bounds.k1_relaxed},
        "compatibility": {"max_mismatch": mismatch, "within_tol": ok},
    })
    return 0


def cmd_lyapunov(args):
    out = {}
    if args.point:
        z = [float(x) for x in args.point]
        if len(z) == 2:
            out["P"] = diag.lyapunov_P(z[0], z[1], args.p, args.theta[0])
        else:
            thetas = args.theta if len(args.theta) == len(z) - 1 else [args.theta[0]] * (len(z) - 1)
            out["P"] = diag.lyapunov_P_m(z, args.p, thetas)
    thr = diag.theta_threshold(args.D, args.Dt, args.K)
    bm = diag.b_matrix_posdef(args.theta[0], args.D, args.Dt, args.beta)
    out |= {
        "theta_threshold": thr,
        "B": bm.matrix.tolist(),
        "det_B": bm.det,
        "B_positive_definite": bm.is_positive_definite,
    }
    _emit(out)
    return 0


def cmd_dual_check(args):
    model = builtin(args.model, d=tuple(args.d) if args.d else None)
    n = 2
    grid = Grid.unit(n, args.nodes)
    law = GrowthLaw.static(n, args.T) if args.rho == 0 else GrowthLaw.exponential(args.rho, n, args.T)
    rng = np.random.default_rng(args.seed)
    base = 0.5 + rng.uniform(0, 1, model.m)

    def u0(x, y):
        return np.stack([b * (1.0 + 0.5 * np.cos(np.pi * (k + 1) * x) * np.cos(np.pi * y))
                         for k, b in enumerate(base)])

    exp = diag.duality_experiment(model, law, grid, args.T, u0, dilution=args.dilution)
    res = exp.result
    passed = res.passed(args.tol)
    _emit({"lhs": res.lhs, "rhs": res.rhs, "residual": res.residual,
           "terms": res.terms, "min_phi": exp.dual.min, "passed": passed})
    return 0 if passed else 1


def _kernel_ctx(args):
    n = args.n or 2
    geometry = args.geometry or ("interval" if n == 1 else "circle")
    return kern.KernelContext(n, geometry, args.mode, nodes=args.nodes)


def cmd_kernel(args):
    w = csv.writer(sys.stdout, lineterminator="\n")
    if args.op == "cn":
        w.writerow(["n", "H0", "H0_closed", "omega_n", "c_n", "relative_error"])
        for n in ([args.n] if args.n else [1, 2, 3]):
            r = kern.h0_and_cn(n)
            w.writerow([n, _r(r.H0), _r(r.H0_closed), _r(r.omega), _r(r.cn), _r(r.relative_error)])
        return 0
    ctx = _kernel_ctx(args)
    if args.op == "verify-z0":
        pts = np.random.default_rng(0).uniform(-1, 1, (16, ctx.n))
        w.writerow(["mode", "coefficients", "residual", "relative", "flagged"])
        for mode in kern.MODES:
            for coeff in ("kernel", "delta_t"):
                r = kern.verify_fundamental(ctx, pts, [0.5, 1.0], coefficients=coeff, mode=mode)
                w.writerow([mode, coeff, _r(r.residual), _r(r.relative), r.flagged])
        return 0
    if args.op == "j-test":
        w.writerow(["nodes", "time_nodes", "J_eps"])
        for k in range(4):
            c = kern.KernelContext(ctx.n, ctx.geometry, ctx.mode, nodes=ctx.nodes * 2**k if ctx.n == 2 else 2)
            nt = 50 * 2**k + 1
            w.writerow([len(c.boundary[2]), nt, _r(kern.j_epsilon(1.0, args.eps, 0, args.t, c, nt))])
        return 0
    op = kern.discretize_J(ctx, np.linspace(0.0, args.t, args.steps + 1))
    K, M = op.shape
    theta = np.arange(M) * 2 * np.pi / M
    gamma = np.array([[np.cos(th) + 1.5 for th in theta] for _ in range(K)])
    sol = kern.solve_density(gamma, op)
    if args.op == "density":
        back = op.apply(sol.g)
        w.writerow(["k", "t", "node", "gamma", "g", "residual"])
        for k in range(K):
            for j in range(M):
                w.writerow([k, _r(op.times[k + 1]), j, _r(gamma[k, j]), _r(sol.g[k, j]),
                            _r(back[k, j] + 2 * gamma[k, j])])
        return 0
    w.writerow(["x", "t", "phi"])
    xs = [0.0, 0.25, 0.5] if ctx.n == 2 else [0.25, 0.5, 0.75]
    for x in xs:
        pt = [x, 0.0] if ctx.n == 2 else [x]
        w.writerow([_r(x), _r(args.t), _r(kern.classical_solution(sol.g, pt, args.t, op))])
    return 0


def cmd_convergence(args):
    res = manufactured_convergence(args.case)
    print("nodes,error")
    for n, e in zip(res.nodes, res.errors):
        print(f"{n},{e!r}")
    print("orders: " + ", ".join(f"{q:.4f}" for q in res.orders) if res.orders else "orders: n/a")
    print(f"status: {res.status}")
    return 0


def cmd_export(args):
    snaps, grid = read_snapshots(args.run_dir)
    diag_path = Path(args.run_dir) / "diagnostics.csv"
    records = read_diagnostics_csv(diag_path) if diag_path.exists() else None
    paths = export_plotdata(snaps, grid, args.what, args.out or args.run_dir, records, args.axis)
    for p in paths:
        print(p)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="evodiff", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("run", help="integrate a configured system")
    s.add_argument("config")
    s.add_argument("--out")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("check", help="validate a config and run the model condition checks")
    s.add_argument("config")
    s.add_argument("--samples", type=int, default=10_000)
    s.set_defaults(func=cmd_check)

    s = sub.add_parser("lyapunov", help="Lyapunov polynomial, Theta threshold and B matrix")
    s.add_argument("--p", type=int, default=2)
    s.add_argument("--theta", type=float, nargs="+", default=[2.0])
    s.add_argument("--point", nargs="+")
    s.add_argument("--D", type=float, default=1.0)
    s.add_argument("--Dt", type=float, default=1.0)
    s.add_argument("--K", type=float, default=1.0)
    s.add_argument("--beta", type=int, default=0)
    s.set_defaults(func=cmd_lyapunov)

    s = sub.add_parser("dual-check", help="evaluate both sides of the duality inequality")
    s.add_argument("--model", default="reversible-reaction")
    s.add_argument("--d", type=float, nargs="+")
    s.add_argument("--nodes", type=int, default=33)
    s.add_argument("--T", type=float, default=0.2)
    s.add_argument("--rho", type=float, default=0.0)
    s.add_argument("--tol", type=float, default=1e-2)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--dilution", choices=["printed", "weighted"], default="printed")
    s.set_defaults(func=cmd_dual_check)

    s = sub.add_parser("kernel", help="heat-potential quantities as CSV")
    s.add_argument("--n", type=int, help="dimension (default: 1-3 for cn, else 2)")
    s.add_argument("--geometry", choices=kern.GEOMETRIES)
    s.add_argument("--mode", choices=kern.MODES, default="4pi")
    s.add_argument("--op", choices=["cn", "verify-z0", "j-test", "density", "reconstruct"], default="cn")
    s.add_argument("--nodes", type=int, default=32)
    s.add_argument("--t", type=float, default=0.5)
    s.add_argument("--eps", type=float, default=0.05)
    s.add_argument("--steps", type=int, default=10)
    s.set_defaults(func=cmd_kernel)

    s = sub.add_parser("convergence", help="manufactured-solution refinement study")
    s.add_argument("case", choices=sorted(CASES))
    s.set_defaults(func=cmd_convergence)

    s = sub.add_parser("export", help="plot-ready CSV from a run directory")
    s.add_argument("run_dir")
    s.add_argument("--what", choices=EXPORTS, default="diagnostics")
    s.add_argument("--out")
    s.add_argument("--axis", type=int, default=0)
    s.set_defaults(func=cmd_export)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with _threads():
            return args.func(args)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return 1
    except (EvodiffError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
