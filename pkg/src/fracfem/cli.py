"""Command-line front end: eig, study, bounds, tables.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure,
3 partial result (DOF budget exceeded).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, references
from .assembly import assemble_mass, assemble_stiffness, export_matrix
from .config import ConfigError, ExperimentConfig, load_config
from .convergence import BudgetExceeded, FitError, eigenfunction_error_series, run_study
from .eigensolve import residual_norm, solve_lowest
from .kernel import (
    chen_song_bounds,
    interval_laplacian_eigenvalue,
    kwasnicki_estimate,
    square_laplacian_eigenvalues,
)
from .mesh import build_mesh, read_mesh, write_mesh

log = logging.getLogger("fracfem")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_PARTIAL = 0, 1, 2, 3

STUDY_COLUMNS_HELP = """\
study CSV columns, in order: s, level, h, n_dofs, lambda_1..lambda_K, then
err_u1..err_uK when a reference level is requested (--refs >= 2).
Numbers are written with 17 significant digits."""

# per-table defaults: domain, s values, k_max, levels, base resolution, reference refinements
TABLE_DEFAULTS = {
    1: dict(domain="interval", s=tuple(r.s for r in references.INTERVAL), k_max=2, levels=6, base=16, refs=3),
    2: dict(domain="disk", s=tuple(r.s for r in references.DISK), k_max=1, levels=3, base=24, refs=0),
    3: dict(domain="square", s=tuple(r.s for r in references.SQUARE), k_max=1, levels=3, base=4, refs=0),
    4: dict(domain="lshape", s=tuple(r.s for r in references.LSHAPE), k_max=1, levels=3, base=8, refs=0),
}
REFERENCE_BAND = 0.01  # relative band around a published extrapolated value


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return "nan" if math.isnan(x) else f"{x:.17g}"


def _write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _write_json(path: Path, payload):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, allow_nan=True) + "\n")


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    return x


# --------------------------------------------------------------------------- eig


def _mesh_for(cfg: ExperimentConfig):
    if cfg.mesh_in:
        try:
            return read_mesh(cfg.mesh_in)
        except (OSError, ValueError) as exc:
            raise UsageError(f"--mesh-in {cfg.mesh_in}: {exc}") from None
    return build_mesh(cfg.domain, cfg.resolution)


def cmd_eig(cfg: ExperimentConfig) -> int:
    if len(cfg.s) != 1:
        raise UsageError("eig takes a single fractional order")
    s = cfg.s[0]
    mesh = _mesh_for(cfg)
    if cfg.k_max > mesh.n_dofs:
        raise UsageError(f"k_max={cfg.k_max} exceeds the {mesh.n_dofs} interior DOFs of the mesh")
    if cfg.budget_dofs is not None and mesh.n_dofs > cfg.budget_dofs:
        raise UsageError(f"mesh has {mesh.n_dofs} DOFs, above --budget-dofs {cfg.budget_dofs}")
    t0 = time.perf_counter()
    K = assemble_stiffness(mesh, s, cfg.quad(mesh.dim))
    M = assemble_mass(mesh)
    spec = solve_lowest(K, M, cfg.k_max, cfg.solver)
    elapsed = time.perf_counter() - t0
    res = [residual_norm(K, M, p) for p in spec.pairs]
    print(f"# {mesh.domain} s={s:g} dofs={mesh.n_dofs} h={mesh.h_max:.6g}")
    print("k,lambda_h,residual")
    for p, r in zip(spec.pairs, res):
        print(f"{p.k},{_fmt(p.lam)},{r:.3e}")
    if cfg.out:
        out = Path(cfg.out)
        _write_csv(out / "eig.csv", ["k", "lambda_h", "residual"], [(p.k, p.lam, r) for p, r in zip(spec.pairs, res)])
        payload = {"config": cfg.to_dict(), "n_dofs": mesh.n_dofs, "h": mesh.h_max,
                   "eigenvalues": list(spec.values), "residuals": res,
                   "clusters": [list(c) for c in spec.multiplicity_clusters]}
        if not cfg.deterministic:
            payload["seconds"] = elapsed
        _write_json(out / "eig.json", _jsonable(payload))
        if cfg.export_matrices:
            export_matrix(K, out / "stiffness.txt")
            export_matrix(M, out / "mass.txt")
            np.savetxt(out / "eigenvectors.txt", spec.vectors, fmt="%.17g")
    if cfg.mesh_out:
        write_mesh(mesh, cfg.mesh_out)
    return EXIT_OK


# --------------------------------------------------------------------------- study


def _study(cfg, s, *, domain=None, k_max=None, levels=None, base=None, refs=None):
    domain = domain or cfg.domain
    mesh = read_mesh(cfg.mesh_in) if cfg.mesh_in else build_mesh(domain, base or cfg.resolution)
    return run_study(
        mesh, s, k_max or cfg.k_max, levels or cfg.levels,
        reference_refinements=cfg.reference_refinements if refs is None else refs,
        quad=cfg.quad(mesh.dim), method=cfg.solver, budget_dofs=cfg.budget_dofs,
        progress=log.info,
    )


def _summarize(study, k_max):
    fits, uorders = {}, {}
    for k in range(1, k_max + 1):
        try:
            f = study.fit(k)
            fits[k] = {"lambda_ext": f.lambda_ext, "c": f.c, "alpha": f.alpha,
                       "rms_residual": f.rms_residual, "method": f.method}
        except (FitError, ValueError) as exc:
            fits[k] = {"error": str(exc)}
        if study.reference is not None and len(study.levels) >= 2:
            e = eigenfunction_error_series(study, k)
            uorders[k] = {"order": e.order, "errors": list(e.errors), "cluster_mode": e.cluster_mode}
    return fits, uorders


def cmd_study(cfg: ExperimentConfig) -> int:
    if cfg.levels < 3:
        raise UsageError("a study needs --levels >= 3")
    rows, summary, status = [], [], EXIT_OK
    t0 = time.perf_counter()
    for s in cfg.s:
        try:
            study = _study(cfg, s)
        except BudgetExceeded as exc:
            log.warning("s=%g: %s", s, exc)
            status = EXIT_PARTIAL
            summary.append({"s": s, "partial": True, "message": str(exc)})
            study = exc.study
            if study is None or len(study.levels) == 0:
                continue
        else:
            fits, uorders = _summarize(study, cfg.k_max)
            summary.append({"s": s, "partial": False, "fits": fits, "eigenfunction_orders": uorders,
                            "lambda_h_finest": list(study.levels[-1].spectrum.values),
                            **_bounds_for(cfg.domain, s, cfg.k_max)})
            fit1 = fits[1]
            print(f"{cfg.domain} s={s:g}: lambda_h={study.levels[-1].spectrum.values[0]:.8f} "
                  f"lambda_ext={fit1.get('lambda_ext', float('nan')):.8f} alpha={fit1.get('alpha', float('nan')):.4f}")
        errs = {}
        if study.reference is not None:
            for k in range(1, cfg.k_max + 1):
                errs[k] = eigenfunction_error_series(study, k).errors
        for i, lv in enumerate(study.levels):
            row = [s, i, lv.h, lv.n_dofs, *lv.spectrum.values]
            if cfg.reference_refinements >= 2:
                row += [errs[k][i] if errs else math.nan for k in range(1, cfg.k_max + 1)]
            rows.append(row)
        if cfg.mesh_out:
            write_mesh(study.levels[-1].mesh, cfg.mesh_out)
    header = ["s", "level", "h", "n_dofs"] + [f"lambda_{k}" for k in range(1, cfg.k_max + 1)]
    if cfg.reference_refinements >= 2:
        header += [f"err_u{k}" for k in range(1, cfg.k_max + 1)]
    if cfg.out:
        out = Path(cfg.out)
        _write_csv(out / f"study_{cfg.domain}.csv", header, rows)
        payload = {"config": cfg.to_dict(), "studies": summary}
        if not cfg.deterministic:
            payload["seconds"] = time.perf_counter() - t0
        _write_json(out / f"study_{cfg.domain}.json", _jsonable(payload))
    return status


# --------------------------------------------------------------------------- bounds


def _bounds_for(domain, s, k_max):
    if domain == "interval":
        return {"kwasnicki": [kwasnicki_estimate(k, s) for k in range(1, k_max + 1)]}
    if domain == "square":
        mus = square_laplacian_eigenvalues(k_max)
        b = [chen_song_bounds(mu, s) for mu in mus]
        return {"chen_song_lower": [x.lower for x in b], "chen_song_upper": [x.upper for x in b]}
    return {}


def cmd_bounds(cfg: ExperimentConfig) -> int:
    if cfg.domain not in ("interval", "square"):
        raise UsageError(f"no closed-form bound is available for domain {cfg.domain!r} "
                         "(the Chen-Song constant is unknown for non-convex or curved polygons here)")
    rows = []
    for s in cfg.s:
        if cfg.domain == "interval":
            for k in range(1, cfg.k_max + 1):
                rows.append([s, k, kwasnicki_estimate(k, s), interval_laplacian_eigenvalue(k) ** s])
            header = ["s", "k", "kwasnicki", "laplacian_power"]
        else:
            for k, mu in enumerate(square_laplacian_eigenvalues(cfg.k_max), start=1):
                b = chen_song_bounds(mu, s)
                rows.append([s, k, b.lower, b.upper])
            header = ["s", "k", "chen_song_lower", "chen_song_upper"]
    print(",".join(header))
    for r in rows:
        print(",".join(_fmt(v) for v in r))
    if cfg.out:
        _write_csv(Path(cfg.out) / f"bounds_{cfg.domain}.csv", header, rows)
    return EXIT_OK


# --------------------------------------------------------------------------- tables


def _within(value, ref):
    return ref is not None and value is not None and abs(value - ref) <= REFERENCE_BAND * abs(ref)


def _table_rows(tid, cfg, explicit):
    d = TABLE_DEFAULTS[tid]
    s_values = cfg.s if "s" in explicit else d["s"]
    levels = cfg.levels if "levels" in explicit else d["levels"]
    base = cfg.base_resolution if "base_resolution" in explicit else d["base"]
    refs = cfg.reference_refinements if "reference_refinements" in explicit else d["refs"]
    table = {1: references.INTERVAL, 2: references.DISK, 3: references.SQUARE, 4: references.LSHAPE}[tid]
    rows, partial = [], False
    for s in s_values:
        ref = references.row_for(table, s)
        cfg_t = cfg.override(domain=d["domain"])
        try:
            study = _study(cfg_t, s, domain=d["domain"], k_max=d["k_max"], levels=levels, base=base, refs=refs)
            complete = True
        except BudgetExceeded as exc:
            log.warning("table %d s=%g: %s", tid, s, exc)
            study, complete, partial = exc.study, False, True
        n = len(study.levels) if study is not None else 0
        fits = [study.fit(k) if n >= 3 else None for k in range(1, d["k_max"] + 1)]
        lam_h = study.levels[-1].spectrum.values if n else [math.nan] * d["k_max"]
        ext = [f.lambda_ext if f else math.nan for f in fits]
        alpha = [f.alpha if f else math.nan for f in fits]
        if tid == 1:
            uo = [eigenfunction_error_series(study, k).order if (complete and study.reference is not None) else math.nan
                  for k in (1, 2)]
            rr = ref or references.IntervalRow(s, (None, None), (None, None), (None, None), (None, None), (None, None))
            flag = all(_within(ext[k], rr.fem_ext[k]) for k in (0, 1))
            rows.append([s, ext[0], rr.fem_ext[0], rr.duo_zhang[0], kwasnicki_estimate(1, s),
                         ext[1], rr.fem_ext[1], rr.duo_zhang[1], kwasnicki_estimate(2, s),
                         alpha[0], alpha[1], uo[0], uo[1], lam_h[0], lam_h[1], flag, not complete])
        elif tid == 2:
            rows.append([s, ref.dkk if ref else None, ext[0], ref.fem_ext if ref else None, lam_h[0],
                         ref.fem_upper if ref else None, alpha[0],
                         _within(ext[0], ref.fem_ext if ref else None), not complete])
        elif tid == 3:
            cs = chen_song_bounds(square_laplacian_eigenvalues(1)[0], s)
            rows.append([s, ref.lower if ref else None, ref.upper if ref else None, cs.lower, cs.upper, lam_h[0],
                         ref.fem_upper if ref else None, ext[0], ref.fem_ext if ref else None, alpha[0],
                         _within(ext[0], ref.fem_ext if ref else None), not complete])
        else:
            rows.append([s, lam_h[0], ref.fem_upper if ref else None, ext[0], ref.fem_ext if ref else None, alpha[0],
                         _within(ext[0], ref.fem_ext if ref else None), not complete])
        log.info("table %d s=%g done: %s", tid, s, rows[-1])
    return rows, partial


TABLE_HEADERS = {
    1: ["s", "lambda_ext_1", "ref_fem_ext_1", "ref_duo_zhang_1", "kwasnicki_1",
        "lambda_ext_2", "ref_fem_ext_2", "ref_duo_zhang_2", "kwasnicki_2",
        "order_lambda_1", "order_lambda_2", "order_u_1", "order_u_2", "lambda_h_1", "lambda_h_2",
        "within_reference", "partial"],
    2: ["s", "ref_dkk", "lambda_ext", "ref_fem_ext", "lambda_h", "ref_fem_upper", "order", "within_reference", "partial"],
    3: ["s", "ref_lower", "ref_upper", "chen_song_lower", "chen_song_upper", "lambda_h", "ref_fem_upper",
        "lambda_ext", "ref_fem_ext", "order", "within_reference", "partial"],
    4: ["s", "lambda_h", "ref_fem_upper", "lambda_ext", "ref_fem_ext", "order", "within_reference", "partial"],
}
TABLE_NAMES = {1: "table1_interval", 2: "table2_disk", 3: "table3_square", 4: "table4_lshape"}


def cmd_tables(cfg: ExperimentConfig, explicit=frozenset()) -> int:
    out = Path(cfg.out or ".")
    status = EXIT_OK
    summary = {"config": cfg.to_dict(), "reference_band": REFERENCE_BAND, "tables": {}}
    for tid in cfg.tables:
        rows, partial = _table_rows(tid, cfg, explicit)
        _write_csv(out / f"{TABLE_NAMES[tid]}.csv", TABLE_HEADERS[tid], rows)
        summary["tables"][TABLE_NAMES[tid]] = {"partial": partial, "rows": len(rows)}
        print(f"{TABLE_NAMES[tid]}: {len(rows)} rows{' (partial)' if partial else ''}")
        if partial:
            status = EXIT_PARTIAL
    _write_json(out / "tables.json", _jsonable(summary))
    return status


# --------------------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON config file; flags override its values")
    common.add_argument("--domain", choices=("interval", "square", "lshape", "disk"))
    common.add_argument("--s", type=float, nargs="+", metavar="S", help="fractional order(s) in (0, 1)")
    common.add_argument("--kmax", type=int, dest="k_max", help="number of eigenpairs")
    common.add_argument("--levels", type=int, help="number of nested levels (study, tables)")
    common.add_argument("--resolution", type=int, dest="base_resolution",
                        help="cells (interval), cells per unit side (square, lshape) or boundary vertices (disk)")
    common.add_argument("--refs", type=int, dest="reference_refinements",
                        help="extra refinements for the eigenfunction reference level")
    common.add_argument("--solver", choices=("auto", "dense", "iterative"))
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--deterministic", action="store_true", default=None,
                        help="omit timings so that outputs are byte-identical across runs")
    common.add_argument("--mesh-in", metavar="PATH", dest="mesh_in")
    common.add_argument("--mesh-out", metavar="PATH", dest="mesh_out")
    common.add_argument("--budget-dofs", type=int, metavar="N", dest="budget_dofs")
    common.add_argument("--export-matrices", action="store_true", default=None, dest="export_matrices",
                        help="eig: write stiffness/mass (lower triangle, coordinate text) and eigenvectors")
    common.add_argument("--tables", type=int, nargs="+", choices=(1, 2, 3, 4))
    common.add_argument("-v", "--verbose", action="store_true", help="progress messages on stderr")

    p = _Parser(prog="fracfem", description="P1 finite elements for the fractional Laplacian eigenproblem")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("eig", parents=[common], help="solve on a single mesh")
    sub.add_parser("study", parents=[common], help="nested refinement study with order fits",
                   epilog=STUDY_COLUMNS_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub.add_parser("bounds", parents=[common], help="closed-form reference values (interval, square)")
    sub.add_parser("tables", parents=[common], help="reproduce the interval, disk, square and L-shape tables")
    return p


_OVERRIDES = ("domain", "s", "k_max", "levels", "base_resolution", "reference_refinements", "solver", "out",
              "deterministic", "mesh_in", "mesh_out", "budget_dofs", "export_matrices", "tables")


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # usage errors, --help, --version
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        explicit = set()
        if args.config:
            explicit |= set(json.loads(Path(args.config).read_text()))
        flags = {k: getattr(args, k) for k in _OVERRIDES if getattr(args, k) is not None}
        explicit |= set(flags)
        cfg = cfg.override(**flags) if flags else cfg.validate()
        if args.command == "eig":
            return cmd_eig(cfg)
        if args.command == "study":
            return cmd_study(cfg)
        if args.command == "bounds":
            return cmd_bounds(cfg)
        return cmd_tables(cfg, frozenset(explicit))
    except (ConfigError, UsageError) as exc:
        print(f"fracfem: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (np.linalg.LinAlgError, ArithmeticError, FloatingPointError) as exc:
        print(f"fracfem: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"fracfem: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
