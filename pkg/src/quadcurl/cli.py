"""Command-line front end: ``quadcurl {meshinfo,solve,convergence,inequality}``.

Every subcommand prints a JSON summary on stdout. Failures print
``{"error": ..., "kind": ...}`` and exit with status 2 (bad input) or 1
(pipeline failure). Settings may come from an INI file (``--config``,
section ``[quadcurl]``); command-line flags win.
"""
import argparse
import configparser
import json
import logging
import math
import sys
from dataclasses import asdict
from pathlib import Path

from .errors import EocTable, eoc
from .forms import SchemeParams, export_matrix_market
from .inequality import (InequalityProbe, coercivity_margin, l3_gradient_orthogonal_probe,
                         probes_to_csv, sobolev_constant)
from .linsolve import DEFAULT_TOL, SolverError
from .manufactured import get_case
from .mesh import MeshError, generate_cube_mesh, read_gmsh
from .pipeline import run_level

log = logging.getLogger("quadcurl")

DEFAULTS = dict(case="a", k=1, tau=None, variant="sym", n=2, levels=None, mesh=None,
                tol=DEFAULT_TOL, seed=42, out=".", method="direct", probe="all",
                taus="5,20,80", samples=20, degree=2, dump_matrices=False, figures=False)
INT_KEYS = {"k", "n", "seed", "samples", "degree"}
FLOAT_KEYS = {"tau", "tol"}
BOOL_KEYS = {"dump_matrices", "figures"}

GNUPLOT_TEMPLATE = """\
# gnuplot template for {csv}; run: gnuplot {name}
set datafile separator ','
set logscale xy
set key bottom right
set xlabel 'h'
set ylabel 'error'
set terminal pngcairo size 800,600
set output '{png}'
plot for [col in '{cols}'] '{csv}' using 'h':col with linespoints title col
"""


class UsageError(ValueError):
    """Invalid configuration; reported with exit status 2."""


def _int_list(text):
    try:
        return [int(t) for t in str(text).replace(" ", "").split(",") if t]
    except ValueError:
        raise UsageError(f"expected a comma-separated list of integers, got {text!r}") from None


def _float_list(text):
    try:
        return [float(t) for t in str(text).replace(" ", "").split(",") if t]
    except ValueError:
        raise UsageError(f"expected a comma-separated list of numbers, got {text!r}") from None


def read_config(path):
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"config not found: {path}")
    cp = configparser.ConfigParser()
    cp.read(path)
    if not cp.has_section("quadcurl"):
        raise UsageError(f"{path}: missing [quadcurl] section")
    out = {}
    for key, raw in cp.items("quadcurl"):
        key = key.replace("-", "_")
        if key not in DEFAULTS:
            raise UsageError(f"{path}: unknown key {key!r}")
        if key in INT_KEYS:
            out[key] = int(raw)
        elif key in FLOAT_KEYS:
            out[key] = float(raw)
        elif key in BOOL_KEYS:
            out[key] = cp.getboolean("quadcurl", key)
        else:
            out[key] = raw
    return out


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with a [quadcurl] section")
    common.add_argument("--out", help="output directory (default: current)")
    common.add_argument("-v", "--verbose", action="store_true")

    scheme = argparse.ArgumentParser(add_help=False)
    scheme.add_argument("--case", choices=["a", "b", "c"])
    scheme.add_argument("--k", type=int, choices=[1, 2])
    scheme.add_argument("--tau", type=float)
    scheme.add_argument("--variant", choices=["sym", "nonsym"])
    scheme.add_argument("--tol", type=float)
    scheme.add_argument("--method", choices=["direct", "iterative"])

    p = argparse.ArgumentParser(prog="quadcurl", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    m = sub.add_parser("meshinfo", parents=[common], help="mesh counts and sizes")
    m.add_argument("--n", type=int)
    m.add_argument("--mesh", help="Gmsh MSH 2.2 file")

    s = sub.add_parser("solve", parents=[common, scheme], help="solve one level")
    s.add_argument("--n", type=int)
    s.add_argument("--mesh", help="Gmsh MSH 2.2 file")
    s.add_argument("--dump-matrices", action="store_true", default=None,
                   help="write A, B and F in MatrixMarket format")

    c = sub.add_parser("convergence", parents=[common, scheme], help="rate study")
    c.add_argument("--levels", help="comma-separated n values, each double the previous")
    c.add_argument("--figures", action="store_true", default=None,
                   help="also render PNG figures (needs matplotlib)")

    i = sub.add_parser("inequality", parents=[common], help="inequality probes")
    i.add_argument("--levels", help="comma-separated n values (each <= 4)")
    i.add_argument("--probe", choices=["sobolev", "l3", "coercivity", "all"])
    i.add_argument("--k", type=int, choices=[1, 2])
    i.add_argument("--degree", type=int, help="polynomial degree of the broken space")
    i.add_argument("--taus", help="comma-separated tau values for the coercivity sweep")
    i.add_argument("--samples", type=int)
    i.add_argument("--seed", type=int)
    return p


def resolve(args):
    """Merge defaults < config file < flags."""
    cfg = dict(DEFAULTS)
    if args.config:
        cfg.update(read_config(args.config))
    for key, val in vars(args).items():
        if key in DEFAULTS and val is not None:
            cfg[key] = val
    cfg["command"] = args.command
    return cfg


def _params(cfg):
    try:
        return SchemeParams(k=cfg["k"], tau=cfg["tau"], variant=cfg["variant"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _mesh(cfg):
    if cfg.get("mesh"):
        return read_gmsh(cfg["mesh"]), None
    n = int(cfg["n"])
    if n < 1:
        raise UsageError(f"n must be >= 1, got {n}")
    return generate_cube_mesh(n), n


def _write(path, text):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return str(path)


def cmd_meshinfo(cfg):
    mesh, n = _mesh(cfg)
    return dict(command="meshinfo", n=n, mesh=cfg.get("mesh"), **mesh.counts())


def cmd_solve(cfg):
    params = _params(cfg)
    case = get_case(cfg["case"])
    mesh, n = _mesh(cfg)
    out = Path(cfg["out"])
    res = run_level(case, params, n=n, mesh=mesh, tol=cfg["tol"], method=cfg["method"])
    table_csv = _errors_csv([res.errors])
    files = {"errors_csv": _write(out / f"solve_{case.name}.csv", table_csv)}
    if cfg["dump_matrices"]:
        for name, mat in (("A", res.blocks.A), ("B", res.blocks.B)):
            files[f"matrix_{name}"] = str(export_matrix_market(out / f"{name}.mtx", mat))
        fpath = out / "F.txt"
        fpath.write_text("\n".join(f"{x:.17e}" for x in res.blocks.F) + "\n")
        files["load_F"] = str(fpath)
    summary = dict(command="solve", case=case.name, params=asdict(params),
                   solve=asdict(res.solve), errors=res.errors.to_dict(),
                   grad_p_over_f=res.errors.e_grad_p / res.errors.f_L2
                   if not case.has_pressure else None,
                   files=files)
    _write(out / f"solve_{case.name}.json", json.dumps(summary, indent=2) + "\n")
    return summary


def _errors_csv(reports):
    if len(reports) >= 2:
        return eoc(reports).to_csv()
    return EocTable(reports).to_csv()


def _check_levels(levels, minimum=3):
    if len(levels) < minimum:
        raise UsageError(f"need at least {minimum} levels, got {levels}")
    for a, b in zip(levels[:-1], levels[1:]):
        if b != 2 * a:
            raise UsageError(f"levels must double: {levels}")


def cmd_convergence(cfg):
    params = _params(cfg)
    case = get_case(cfg["case"])
    levels = _int_list(cfg["levels"] or "2,4,8")
    _check_levels(levels)
    out = Path(cfg["out"])
    csv_path = out / f"convergence_{case.name}.csv"
    reports, solves = [], []
    failure = None
    for n in levels:
        try:
            res = run_level(case, params, n=n, tol=cfg["tol"], method=cfg["method"])
        except (SolverError, MemoryError) as exc:
            failure = f"level n={n} failed: {exc}"
            break
        reports.append(res.errors)
        solves.append(asdict(res.solve))
        del res
    table = eoc(reports, k=params.k) if len(reports) >= 2 else None
    if table is not None:
        table.complete = failure is None
        text = table.to_csv()
    else:
        text = _errors_csv(reports) if reports else ""
        if failure:
            text += "# INCOMPLETE: a level failed; rows above are partial\n"
    files = {"csv": _write(csv_path, text)}
    cols = "e_L2_u e_L2_curl e_energy e_h1h_curl e_grad_p"
    gp = out / f"convergence_{case.name}.gp"
    files["gnuplot"] = _write(gp, GNUPLOT_TEMPLATE.format(
        csv=csv_path.name, name=gp.name, png=f"convergence_{case.name}.png", cols=cols))
    if cfg["figures"] and table is not None:
        from .plotting import plot_convergence
        files["figures"] = [str(p) for p in plot_convergence(table, out, case.name)]
    summary = dict(command="convergence", case=case.name, params=asdict(params),
                   levels=levels, complete=failure is None,
                   orders=table.orders if table else [], solves=solves, files=files)
    if failure:
        raise PipelineFailure(failure, summary)
    _write(out / f"convergence_{case.name}.json", json.dumps(summary, indent=2) + "\n")
    return summary


class PipelineFailure(RuntimeError):
    def __init__(self, message, partial):
        super().__init__(message)
        self.partial = partial


def cmd_inequality(cfg):
    levels = _int_list(cfg["levels"] or "2,3,4")
    if not levels or any(n < 1 or n > 4 for n in levels):
        raise UsageError(f"inequality levels must lie in 1..4, got {levels}")
    k = int(cfg["k"])
    which = cfg["probe"]
    probes = []
    if which in ("sobolev", "all"):
        for n in levels:
            probes.append(sobolev_constant(generate_cube_mesh(n), cfg["degree"], n=n))
    if which in ("l3", "all"):
        for n in levels:
            probes.append(l3_gradient_orthogonal_probe(generate_cube_mesh(n), k, cfg["samples"],
                                                       seed=cfg["seed"], n=n))
    if which in ("coercivity", "all"):
        mesh = generate_cube_mesh(1)
        for tau in _float_list(cfg["taus"]):
            margin = coercivity_margin(mesh, k, tau)
            probes.append(InequalityProbe(f"coercivity_tau={tau:g}", 1, margin, "eigen"))
    out = Path(cfg["out"])
    path = _write(out / "inequality.csv", probes_to_csv(probes))
    return dict(command="inequality", probes=[asdict(p) for p in probes], files={"csv": path})


COMMANDS = dict(meshinfo=cmd_meshinfo, solve=cmd_solve, convergence=cmd_convergence,
                inequality=cmd_inequality)


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(args)
        result = COMMANDS[args.command](cfg)
    except FileNotFoundError as exc:
        msg = str(exc) if "not found" in str(exc) else f"mesh not found: {exc.filename}"
        print(json.dumps(dict(error=msg, kind="input")))
        return 2
    except (UsageError, MeshError, ValueError) as exc:
        print(json.dumps(dict(error=str(exc), kind="input")))
        return 2
    except PipelineFailure as exc:
        print(json.dumps(_jsonable(dict(error=str(exc), kind="pipeline", partial=exc.partial))))
        return 1
    except (SolverError, RuntimeError) as exc:
        print(json.dumps(dict(error=str(exc), kind="pipeline")))
        return 1
    print(json.dumps(_jsonable(result), indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
