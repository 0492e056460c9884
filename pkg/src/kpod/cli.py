"""Command-line interface: offline builds, online queries, benchmark tables.

Subcommands: ``offline`` (snapshot campaign + kernel fit + tessellation,
saved to a model directory), ``online`` (queries against a saved model),
``bench`` (regenerate the benchmark tables as CSV), ``mesh`` (generate or
inspect mesh files). Exit codes: 0 ok, 1 numerical failure, 2 usage.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import store
from .geometry import build_geometry
from .kpca import kpca_fit
from .online import init_guess, optimal_path, qpod_solve
from .problems import adv1d, adv2d
from .reduction import rb_solve_galerkin, svd_truncate

DEFAULT_EPS = 1e-8
DEFAULT_KPCA_EPS = {"adv1d": 1e-2, "adv2d": 1e-3}
DEFAULT_BETA = {"adv1d": 1e-4, "adv2d": 1e-3}
DEFAULT_KERNEL = {"adv1d": "centroid1d", "adv2d": "centroid2d"}
QPOD_COLUMN_GUARD = 4000

TABLE_TIMES_1D = (0.25, 0.5, 0.75, 1.0)
QUERIES_2D = ((0.0, 50.0), (0.5, 30.0), (0.7, 20.0))


def _parse_levels(text: str) -> int:
    """Connectivity levels flag: 'L' or 'L/L+1'."""
    if "/" in text:
        lo, hi = text.split("/", 1)
        base, top = int(lo), int(hi)
        if top != base + 1:
            raise argparse.ArgumentTypeError("levels must be 'L' or 'L/L+1'")
    else:
        base = int(text)
    if base < 1:
        raise argparse.ArgumentTypeError("levels must be >= 1")
    return base


def _jobs(args) -> int:
    env = os.environ.get("KPOD_JOBS")
    if env is not None:
        return max(1, int(env))
    return max(1, args.jobs)


def _write_rows(path: Path, header, rows, fmt: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        payload = [dict(zip(header, row)) for row in rows]
        path.with_suffix(".json").write_text(
            json.dumps(payload, indent=1) + "\n", encoding="ascii"
        )
        return
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt_cell(v) for v in row) + "\n")


def _fmt_cell(v) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def _print_spectrum(spectrum) -> None:
    fractions = spectrum.cumulative_fractions
    print("index,value [spectrum units],cumulative fraction [-]")
    for i, (value, frac) in enumerate(zip(spectrum.values, fractions), start=1):
        print(f"{i},{value:.6e},{frac:.8f}")


def cmd_offline(args) -> int:
    eps = args.eps
    kpca_eps = args.kpca_eps if args.kpca_eps is not None else DEFAULT_KPCA_EPS[args.problem]
    beta = args.beta if args.beta is not None else DEFAULT_BETA[args.problem]
    kernel_name = args.kernel if args.kernel is not None else DEFAULT_KERNEL[args.problem]

    if args.problem == "adv1d":
        if kernel_name != "centroid1d":
            raise ValueError(f"problem adv1d uses the centroid1d kernel, got {kernel_name}")
        grid = adv1d.Grid1D(n_intervals=args.n_intervals)
        snapshots = adv1d.campaign_1d(grid)
        kernel = adv1d.kernel_spec_1d(grid, beta=beta)
        problem = {
            "id": "adv1d",
            "n_intervals": grid.n_intervals,
            "dt": grid.dt,
            "n_steps": grid.n_steps,
        }
    else:
        if kernel_name != "centroid2d":
            raise ValueError(f"problem adv2d uses the centroid2d kernel, got {kernel_name}")
        mesh = adv2d.build_mesh_2d(args.h)
        snapshots = adv2d.campaign_2d(args.ns, args.seed, mesh=mesh, jobs=_jobs(args))
        kernel = adv2d.kernel_spec_2d(mesh, beta=beta)
        problem = {"id": "adv2d", "h": mesh.h, "n_snapshots": args.ns, "seed": args.seed}

    model = kpca_fit(snapshots, kernel, kpca_eps)
    geometry = build_geometry(model.Z)
    bundle = store.ModelBundle(
        model=model, geometry=geometry, problem=problem, eps=eps, kpca_eps=kpca_eps
    )
    store.save(bundle, args.out)
    _print_spectrum(model.spectrum)
    print(f"model written to {args.out} (k={model.reduced_dim}, n_S={snapshots.n_snapshots})")
    return 0


def _march_1d(bundle, v, level, eps, strategy):
    grid = adv1d.Grid1D(
        n_intervals=int(bundle.problem["n_intervals"]),
        dt=float(bundle.problem["dt"]),
        n_steps=int(bundle.problem["n_steps"]),
    )
    n_steps = round(1.0 / grid.dt)
    if strategy == "kpod":
        return grid, n_steps, adv1d.integrate_1d(
            v, "kpod", grid, n_steps=n_steps, model=bundle.model,
            geom=bundle.geometry, level=level, eps=eps,
        )
    if strategy == "pod":
        return grid, n_steps, adv1d.integrate_1d(
            v, "pod", grid, n_steps=n_steps, pod_basis=bundle.pod_basis()
        )
    return grid, n_steps, adv1d.integrate_1d(v, "full", grid, n_steps=n_steps)


def cmd_online(args) -> int:
    bundle = store.load(args.model)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    eps = args.eps if args.eps is not None else bundle.eps
    fmt = args.format

    if bundle.problem.get("id") == "adv1d":
        if args.v is None:
            raise ValueError("adv1d online queries need --v")
        grid, n_steps, march = _march_1d(bundle, args.v, args.levels, eps, args.strategy)
        x = grid.interior_nodes
        times = [t for t in TABLE_TIMES_1D if t <= n_steps * grid.dt + 1e-12]
        cols = [x] + [march.state_at_step(round(t / grid.dt)) for t in times]
        header = ["x [length]"] + [f"u(t={t}) [solution]" for t in times]
        _write_rows(out / "solution.csv", header, list(zip(*cols)), fmt)
        trace_rows = [
            (n, nu, it.cell + 1, it.level, it.ktilde, it.residual)
            for n, tr in enumerate(march.traces)
            for nu, it in enumerate(tr.iterates)
        ]
        _write_rows(
            out / "trace.csv",
            ["time_step [-]", "nu [-]", "cell [1-based]", "level [-]", "ktilde [-]",
             "residual [euclidean]"],
            trace_rows,
            fmt,
        )
        if args.reference == "full":
            full = adv1d.integrate_1d(args.v, "full", grid, n_steps=n_steps)
            steps = [round(t / grid.dt) for t in times]
            for t, err in zip(times, adv1d.relative_errors(march, full, steps)):
                print(f"relative error at t={t}: {err:.6e}")
        return 0

    # adv2d: one query
    if args.mu is None or args.alpha is None:
        raise ValueError("adv2d online queries need --mu and --alpha")
    mesh = bundle.model.kernel.geometry
    K, f = adv2d.assemble_2d(mesh, args.alpha, args.mu)
    pod = bundle.pod_basis()
    snapshots = bundle.snapshots
    if args.strategy == "pod":
        x = rb_solve_galerkin(K, f, pod)
        trace_rows = []
    elif args.strategy == "qpod":
        _guard_qpod(snapshots.n_snapshots)
        x = qpod_solve(K, f, snapshots, eps)
        trace_rows = []
    else:
        z0 = init_guess("from-pod", model=bundle.model, pod_basis=pod, K=K, f=f)
        x, trace = optimal_path(
            z0, args.levels, K, f, bundle.geometry, bundle.model, snapshots, eps
        )
        trace_rows = [
            (0, nu, it.cell + 1, it.level, it.ktilde, it.residual)
            for nu, it in enumerate(trace.iterates)
        ]
    header = ["x [length]", "y [length]", "u [solution]"]
    rows = list(zip(mesh.nodes[:, 0], mesh.nodes[:, 1], x))
    _write_rows(out / "solution.csv", header, rows, fmt)
    _write_rows(
        out / "trace.csv",
        ["query [-]", "nu [-]", "cell [1-based]", "level [-]", "ktilde [-]",
         "residual [euclidean]"],
        trace_rows,
        fmt,
    )
    if args.reference == "full":
        u_ref = adv2d.solve_full(K, f)
        err = float(np.linalg.norm(x - u_ref) / np.linalg.norm(u_ref))
        print(f"relative error at (mu={args.mu}, alpha={args.alpha}): {err:.6e}")
    return 0


def _guard_qpod(n_snapshots: int, guard: int = QPOD_COLUMN_GUARD) -> int:
    n_q = n_snapshots + n_snapshots * (n_snapshots + 1) // 2
    if n_q > guard:
        raise ValueError(
            f"quadratic POD refused: {n_q} enriched columns exceed the memory "
            f"guard of {guard}"
        )
    return n_q


def _bench_1d(args, out: Path, fmt: str) -> None:
    grid = adv1d.Grid1D()
    snapshots = adv1d.campaign_1d(grid)
    kernel = adv1d.kernel_spec_1d(grid, beta=DEFAULT_BETA["adv1d"])
    model = kpca_fit(snapshots, kernel, DEFAULT_KPCA_EPS["adv1d"])
    geometry = build_geometry(model.Z)
    mean = snapshots.mean()
    pod = svd_truncate(snapshots.X - mean[:, None], args.eps).with_offset(mean)

    n_steps = round(1.0 / grid.dt)
    steps = [round(t / grid.dt) for t in TABLE_TIMES_1D]
    full = adv1d.integrate_1d(args.v, "full", grid, n_steps=n_steps)
    pod_march = adv1d.integrate_1d(args.v, "pod", grid, n_steps=n_steps, pod_basis=pod)
    pod_errors = adv1d.relative_errors(pod_march, full, steps)
    _write_rows(
        out / "table_1d_pod.csv",
        ["time [time]", "relative_error [-]"],
        list(zip(TABLE_TIMES_1D, pod_errors)),
        fmt,
    )

    kpod_march = adv1d.integrate_1d(
        args.v, "kpod", grid, n_steps=n_steps, model=model, geom=geometry,
        level=args.levels, eps=args.eps,
    )
    kpod_errors = adv1d.relative_errors(kpod_march, full, steps)
    rows = []
    for t, n, err in zip(TABLE_TIMES_1D, steps, kpod_errors):
        window = kpod_march.traces[:n]
        mean_steps = float(np.mean([len(tr.iterates) for tr in window]))
        mean_kt = float(np.mean([it.ktilde for tr in window for it in tr.iterates]))
        rows.append((t, err, mean_steps, mean_kt))
    _write_rows(
        out / "table_1d_kpod.csv",
        ["time [time]", "relative_error [-]", "mean_path_steps [-]", "mean_ktilde [-]"],
        rows,
        fmt,
    )
    for t, n in zip(TABLE_TIMES_1D, steps):
        _write_rows(
            out / f"profile_1d_t{t}.csv",
            ["x [length]", "u_full [solution]", "u_pod [solution]", "u_kpod [solution]"],
            list(zip(
                grid.interior_nodes,
                full.state_at_step(n),
                pod_march.state_at_step(n),
                kpod_march.state_at_step(n),
            )),
            fmt,
        )


def _bench_1d_levels(args, out: Path, fmt: str) -> None:
    grid = adv1d.Grid1D()
    snapshots = adv1d.campaign_1d(grid)
    kernel = adv1d.kernel_spec_1d(grid, beta=DEFAULT_BETA["adv1d"])
    model = kpca_fit(snapshots, kernel, DEFAULT_KPCA_EPS["adv1d"])
    geometry = build_geometry(model.Z)
    n_steps = round(1.0 / grid.dt)
    full = adv1d.integrate_1d(args.v, "full", grid, n_steps=n_steps)
    rows = []
    for level in (1, 2, 3):
        march = adv1d.integrate_1d(
            args.v, "kpod", grid, n_steps=n_steps, model=model, geom=geometry,
            level=level, eps=args.eps,
        )
        err = adv1d.relative_errors(march, full, [n_steps])[0]
        rows.append((
            f"{level}/{level + 1}",
            err,
            march.mean_path_steps,
            march.mean_ktilde,
        ))
    _write_rows(
        out / "table_1d_levels.csv",
        ["connectivity_levels [-]", "relative_error [-]", "mean_path_steps [-]",
         "mean_ktilde [-]"],
        rows,
        fmt,
    )


def _bench_2d(args, out: Path, fmt: str) -> None:
    mesh = adv2d.build_mesh_2d(args.h)
    snapshots = adv2d.campaign_2d(args.ns, args.seed, mesh=mesh, jobs=_jobs(args))
    kernel = adv2d.kernel_spec_2d(mesh, beta=DEFAULT_BETA["adv2d"])
    model = kpca_fit(snapshots, kernel, DEFAULT_KPCA_EPS["adv2d"])
    geometry = build_geometry(model.Z)
    mean = snapshots.mean()
    pod = svd_truncate(snapshots.X - mean[:, None], args.eps).with_offset(mean)
    flows = adv2d.flow_fields(mesh)

    run_qpod = True
    try:
        _guard_qpod(snapshots.n_snapshots)
    except ValueError as exc:
        print(f"warning: {exc}", file=sys.stderr)
        run_qpod = False

    def query(mu, alpha):
        K, f = adv2d.assemble_2d(mesh, alpha, mu, flows=flows)
        u_ref = adv2d.solve_full(K, f)
        ref_norm = np.linalg.norm(u_ref)
        u_pod = rb_solve_galerkin(K, f, pod)
        z0 = init_guess("from-pod", model=model, pod_basis=pod, K=K, f=f)
        x, trace = optimal_path(
            z0, args.levels, K, f, geometry, model, snapshots, args.eps
        )
        result = {
            "pod": float(np.linalg.norm(u_pod - u_ref) / ref_norm),
            "kpod": float(np.linalg.norm(x - u_ref) / ref_norm),
            "steps": len(trace.iterates),
            "ktildes": "/".join(str(it.ktilde) for it in trace.iterates),
            "fields": (u_ref, u_pod, x),
        }
        if run_qpod:
            u_qpod = qpod_solve(K, f, snapshots, args.eps)
            result["qpod"] = float(np.linalg.norm(u_qpod - u_ref) / ref_norm)
        return result

    jobs = _jobs(args)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda q: query(*q), QUERIES_2D))
    else:
        results = [query(*q) for q in QUERIES_2D]

    _write_rows(
        out / "table_2d_pod.csv",
        ["mu_src [length]", "alpha [deg]", "relative_error [-]"],
        [(mu, al, r["pod"]) for (mu, al), r in zip(QUERIES_2D, results)],
        fmt,
    )
    _write_rows(
        out / "table_2d_kpod.csv",
        ["mu_src [length]", "alpha [deg]", "connectivity_levels [-]",
         "relative_error [-]", "path_steps [-]", "ktilde_per_step [-]"],
        [
            (mu, al, f"{args.levels}/{args.levels + 1}", r["kpod"], r["steps"], r["ktildes"])
            for (mu, al), r in zip(QUERIES_2D, results)
        ],
        fmt,
    )
    if run_qpod:
        _write_rows(
            out / "table_2d_qpod.csv",
            ["mu_src [length]", "alpha [deg]", "relative_error [-]"],
            [(mu, al, r["qpod"]) for (mu, al), r in zip(QUERIES_2D, results)],
            fmt,
        )
    for (mu, al), r in zip(QUERIES_2D, results):
        u_ref, u_pod, u_kpod = r["fields"]
        _write_rows(
            out / f"profile_2d_mu{mu}_alpha{al}.csv",
            ["x [length]", "y [length]", "u_full [solution]", "u_pod [solution]",
             "u_kpod [solution]"],
            list(zip(mesh.nodes[:, 0], mesh.nodes[:, 1], u_ref, u_pod, u_kpod)),
            fmt,
        )


def cmd_bench(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.table == "table-1d":
        _bench_1d(args, out, args.format)
    elif args.table == "table-1d-levels":
        _bench_1d_levels(args, out, args.format)
    else:
        _bench_2d(args, out, args.format)
    print(f"tables written to {out}")
    return 0


def cmd_mesh(args) -> int:
    if args.action == "generate":
        mesh = adv2d.build_mesh_2d(args.h)
        adv2d.save_mesh(mesh, args.out)
        print(f"mesh written to {args.out} ({mesh.n_nodes} nodes, {mesh.n_triangles} triangles)")
        return 0
    mesh = adv2d.load_mesh(args.path)
    areas = mesh.element_geometry[0]
    counts = {
        "dirichlet": int(np.sum(mesh.markers == adv2d.MARKER_DIRICHLET)),
        "circle": int(np.sum(mesh.markers == adv2d.MARKER_CIRCLE)),
        "interior": int(np.sum(mesh.markers == adv2d.MARKER_INTERIOR)),
    }
    print(f"nodes {mesh.n_nodes} triangles {mesh.n_triangles}")
    print(f"min area {areas.min():.6e} max area {areas.max():.6e}")
    print(f"markers: {counts}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kpod",
        description="Kernel-PCA reduced-order modeling toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("offline", help="run a snapshot campaign and save the model")
    p.add_argument("--problem", choices=("adv1d", "adv2d"), required=True)
    p.add_argument("--eps", type=float, default=DEFAULT_EPS,
                   help="truncation tolerance for reduced bases")
    p.add_argument("--kpca-eps", type=float, default=None,
                   help="spectrum tolerance for the kernel reduction "
                        "(default 1e-2 for adv1d, 1e-3 for adv2d)")
    p.add_argument("--kernel", choices=("centroid1d", "centroid2d"), default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--n-intervals", type=int, default=2000, help="adv1d grid intervals")
    p.add_argument("--ns", type=int, default=200, help="adv2d campaign size")
    p.add_argument("--seed", type=int, default=7, help="adv2d campaign seed")
    p.add_argument("--h", type=float, default=0.02, help="adv2d element size")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_offline)

    p = sub.add_parser("online", help="query a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--strategy", choices=("kpod", "pod", "qpod"), default="kpod")
    p.add_argument("--levels", type=_parse_levels, default=1,
                   help="connectivity levels, e.g. 1/2")
    p.add_argument("--eps", type=float, default=None,
                   help="override the stored truncation tolerance")
    p.add_argument("--v", type=float, default=None, help="adv1d advection velocity")
    p.add_argument("--mu", type=float, default=None, help="adv2d source position")
    p.add_argument("--alpha", type=float, default=None, help="adv2d flow angle [deg]")
    p.add_argument("--reference", choices=("none", "full"), default="none")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_online)

    p = sub.add_parser("bench", help="regenerate benchmark tables")
    p.add_argument("table", choices=("table-1d", "table-1d-levels", "table-2d"))
    p.add_argument("--out", required=True)
    p.add_argument("--eps", type=float, default=DEFAULT_EPS)
    p.add_argument("--levels", type=_parse_levels, default=1)
    p.add_argument("--v", type=float, default=1.5, help="1d query velocity")
    p.add_argument("--ns", type=int, default=60, help="2d campaign size")
    p.add_argument("--seed", type=int, default=7, help="2d campaign seed")
    p.add_argument("--h", type=float, default=0.04, help="2d element size")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("mesh", help="generate or inspect mesh files")
    mesh_sub = p.add_subparsers(dest="action", required=True)
    g = mesh_sub.add_parser("generate")
    g.add_argument("--h", type=float, required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_mesh)
    i = mesh_sub.add_parser("inspect")
    i.add_argument("path")
    i.set_defaults(func=cmd_mesh)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, store.StoreError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
