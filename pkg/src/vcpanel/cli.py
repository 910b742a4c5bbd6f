"""Command-line front end: ``vcpanel simulate | mc | fit | bands``.

Every command writes its artifacts plus ``run-manifest.json`` into the output
directory (``--out``, else ``$VCPANEL_OUT``, else ``./vcpanel-out``; ``bands``
defaults to ``<fit-dir>/bands``).  Flags
can also come from a flat ``key = value`` file given with ``--config``; keys
are flag names without the leading dashes (``r-max`` or ``r_max``) and flags
on the command line win over the file.

Exit status: 0 on success, 1 on invalid input, 2 on bad usage, 3 when some
fit did not converge and ``--allow-nonconverged`` was not given (artifacts are
still written).
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import logging
import os
import sys
from dataclasses import asdict, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .estimator import FitConfig, post_selection_fit
from .inference import bootstrap_bands, coefficient_curves, variance_decomposition
from .panel import PanelData, PanelError, load_panel_csv, write_panel_csv
from .selection import PipelineConfig, run_pipeline, select_num_factors
from .simulate import DgpConfig, generate, monte_carlo

log = logging.getLogger("vcpanel")

EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGED = 0, 1, 3
DEFAULT_OUT = "vcpanel-out"
SUBCOMMANDS = ("simulate", "mc", "fit", "bands")


class CliError(Exception):
    pass


# ---------------------------------------------------------------- helpers

def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _jsonable(value):
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def _write_manifest(out: Path, args, artifacts, inputs=None) -> None:
    config = {k: _jsonable(v) for k, v in sorted(vars(args).items()) if k != "func"}
    manifest = {
        "command": args.command,
        "version": __version__,
        "seed": getattr(args, "seed", None),
        "config": config,
        "inputs": {str(p): sha256(p) for p in (inputs or [])},
        "artifacts": {name: sha256(out / name) for name in sorted(artifacts)},
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    _write_json(out / "run-manifest.json", manifest)


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get("VCPANEL_OUT") or DEFAULT_OUT)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _nu(text: str):
    if text == "auto":
        return "auto"
    try:
        val = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--nu must be 'auto' or a number, got {text!r}")
    if not val >= 0:
        raise argparse.ArgumentTypeError("--nu must be non-negative")
    return val


def _r(text: str):
    if text == "auto":
        return "auto"
    try:
        val = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--r must be 'auto' or an integer, got {text!r}")
    if val < 0:
        raise argparse.ArgumentTypeError("--r must be >= 0")
    return val


def _level(text: str) -> float:
    val = float(text)
    if not 0 < val < 1:
        raise argparse.ArgumentTypeError(f"--level must lie in (0, 1), got {val}")
    return val


def _positive_int(text: str) -> int:
    val = int(text)
    if val < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {val}")
    return val


def _case(text: str) -> str:
    val = text.upper()
    if val not in ("LD", "HD"):
        raise argparse.ArgumentTypeError("--case must be ld or hd")
    return val


def _fit_config(args) -> FitConfig:
    return FitConfig(tol=args.tol, max_iter=args.max_iter, n_starts=args.n_starts,
                     seed=args.seed, m=args.m)


def _pipeline(args) -> PipelineConfig:
    return PipelineConfig(fit=_fit_config(args), regime=args.regime, n_grid=args.n_grid,
                          nu_low=args.nu_low, nu_high=args.nu_high)


# ---------------------------------------------------------------- commands

def cmd_simulate(args) -> int:
    out = _out_dir(args)
    cfg = DgpConfig(args.n, args.t, case=args.case, r_true=args.r_true, seed=args.seed,
                    noise_scale=args.noise_scale)
    data, truth = generate(cfg)
    write_panel_csv(data, out / "panel.csv")
    _write_json(out / "truth.json", {
        "dgp": asdict(cfg),
        "p": cfg.p,
        "p_star": cfg.p_star,
        "true_support": [data.regressor_names[j] for j in sorted(truth.true_support)],
        "beta_fn": {data.regressor_names[j]: tag for j, tag in sorted(truth.beta_fn.items())},
        "f0": truth.f0.tolist(),
        "gamma0": truth.gamma0.tolist(),
    })
    _write_manifest(out, args, ["panel.csv", "truth.json"])
    log.info("wrote %s", out / "panel.csv")
    return EXIT_OK


def cmd_mc(args) -> int:
    if args.emit_panel is not None and not 0 <= args.emit_panel < args.reps:
        raise CliError(f"--emit-panel must lie in 0..{args.reps - 1}")
    out = _out_dir(args)
    pipe = _pipeline(args)
    rows, artifacts, nonconv = [], [], 0
    for size in args.grid_sizes:
        cfg = DgpConfig(size, size, case=args.case, r_true=args.r_true, seed=args.seed,
                        noise_scale=args.noise_scale)
        rep = monte_carlo(cfg, args.reps, pipe, threads=args.threads,
                          select_r=args.select_r, r_max=args.r_max)
        nonconv += rep.n_nonconverged
        rows.append([size, f"{rep.fnr:.2f}", f"{rep.fpr:.2f}"])
        name = f"mc_{args.case.lower()}_{size}.json"
        _write_json(out / name, rep.to_json())
        curve_rows = []
        for j, c in sorted(rep.curves.items()):
            for k, z in enumerate(rep.grid):
                curve_rows.append([f"x{j + 1}", _fmt(z), _fmt(c["mean"][k]),
                                   _fmt(c["lower"][k]), _fmt(c["upper"][k])])
        cname = f"curves_{args.case.lower()}_{size}.csv"
        _write_csv(out / cname, ["regressor", "z", "mean", "lower", "upper"], curve_rows)
        artifacts += [name, cname]
        if args.emit_panel is not None:
            data, _ = generate(replace(cfg, seed=cfg.seed + args.emit_panel))
            pname = f"panel_{args.case.lower()}_{size}_rep{args.emit_panel}.csv"
            write_panel_csv(data, out / pname)
            artifacts.append(pname)
        log.info("%s N=T=%d: FNR %.2f%% FPR %.2f%%", args.case, size, rep.fnr, rep.fpr)
    _write_csv(out / "fnr_fpr.csv", ["N=T", "FNR", "FPR"], rows)
    artifacts.append("fnr_fpr.csv")
    _write_manifest(out, args, artifacts)
    return _exit_for(nonconv, args)


def _exit_for(nonconverged: int, args) -> int:
    if nonconverged and not args.allow_nonconverged:
        log.error("%d fit(s) did not converge; rerun with --allow-nonconverged to accept",
                  nonconverged)
        return EXIT_NONCONVERGED
    return EXIT_OK


def _load(args) -> tuple[PanelData, dict]:
    regs = args.regressors.split(",") if args.regressors else None
    data = load_panel_csv(args.panel, regs)
    meta = {}
    if args.standardize:
        data, mean, sd = data.standardized()
        meta = {"x_mean": mean.tolist(), "x_sd": sd.tolist()}
    return data, meta


def _write_fit_outputs(out: Path, data: PanelData, post, grid) -> list[str]:
    names = data.regressor_names
    m = post.m
    _write_csv(out / "coef.csv", ["regressor"] + [f"c{k}" for k in range(m)],
               [[names[j]] + [_fmt(v) for v in post.coef.c[j]] for j in range(len(names))])
    r = post.r
    _write_csv(out / "factors.csv", ["period"] + [f"f{k + 1}" for k in range(r)],
               [[pid] + [_fmt(v) for v in post.factors.f[t]]
                for t, pid in enumerate(data.period_ids)])
    _write_csv(out / "loadings.csv", ["unit"] + [f"gamma{k + 1}" for k in range(r)],
               [[uid] + [_fmt(v) for v in post.factors.gamma[i]]
                for i, uid in enumerate(data.unit_ids)])
    rows = []
    for ce in coefficient_curves(post, grid):
        rows += [[names[ce.regressor], _fmt(z), _fmt(v)] for z, v in zip(ce.grid, ce.point)]
    _write_csv(out / "curves.csv", ["regressor", "z", "point"], rows)
    files = ["coef.csv", "factors.csv", "loadings.csv", "curves.csv"]
    if r >= 1:
        vd = variance_decomposition(post)
        _write_csv(out / "variance_decomposition.csv", ["factor", "share", "cumulative"],
                   [[f"f{k + 1}", _fmt(s), _fmt(c)]
                    for k, (s, c) in enumerate(zip(vd.shares, vd.cumulative))])
        files.append("variance_decomposition.csv")
    return files


def _grid(args) -> np.ndarray:
    if args.grid_n < 1 or (args.grid_n > 1 and not args.grid_hi > args.grid_lo):
        raise CliError("need --grid-n >= 1 and --grid-hi > --grid-lo")
    return np.linspace(args.grid_lo, args.grid_hi, args.grid_n)


def cmd_fit(args) -> int:
    out = _out_dir(args)
    data, meta = _load(args)
    pipe = _pipeline(args)
    nu = None if args.nu == "auto" else args.nu
    artifacts = []
    pic_rows = None
    if args.r == "auto":
        r, pic_rows, results = select_num_factors(data, args.r_max, pipe, nu)
        sel = results[r]
        _write_csv(out / "pic_table.csv", ["r", "sigma2", "pic", "selected", "converged"],
                   [[row["r"], _fmt(row["sigma2"]), _fmt(row["pic"]),
                     ";".join(data.regressor_names[j] for j in row["selected"]),
                     int(row["converged"])] for row in pic_rows])
        artifacts.append("pic_table.csv")
    else:
        r = args.r
        sel = run_pipeline(data, r, pipe, nu)
    _write_csv(out / "bic_table.csv", ["nu", "rss", "df", "bic", "converged"],
               [[_fmt(row["nu"]), _fmt(row["rss"]), row["df"], _fmt(row["bic"]),
                 int(row["converged"])] for row in sel.bic_table])
    artifacts.append("bic_table.csv")
    post = sel.post_fit
    artifacts += _write_fit_outputs(out, data, post, _grid(args))
    selected = sorted(sel.selected)
    summary = {
        "panel": str(Path(args.panel).resolve()),
        "panel_sha256": sha256(args.panel),
        "regressors": list(data.regressor_names),
        "standardize": bool(args.standardize),
        **meta,
        "n_units": data.n_units,
        "n_periods": data.n_periods,
        "m": post.m,
        "r": r,
        "regime": sel.path.regime,
        "nu": sel.best_nu,
        "lambda": sel.best_lambda.tolist(),
        "selected": [data.regressor_names[j] for j in selected],
        "selected_index": selected,
        "rss_norm": post.rss_norm,
        "objective": post.objective,
        "iterations": post.iterations,
        "converged": bool(post.converged and sel.fit.converged),
        "fit_config": asdict(replace(_fit_config(args), m=post.m)),
    }
    _write_json(out / "fit.json", summary)
    artifacts.append("fit.json")
    _write_manifest(out, args, artifacts, inputs=[args.panel])
    log.info("selected %s with r=%d", summary["selected"], r)
    nonconv = 0 if summary["converged"] else 1
    if pic_rows is not None:
        nonconv += sum(not row["converged"] for row in pic_rows)
    return _exit_for(nonconv, args)


def cmd_bands(args) -> int:
    fit_dir = Path(args.fit_dir)
    try:
        summary = json.loads((fit_dir / "fit.json").read_text())
    except FileNotFoundError:
        raise CliError(f"no fit.json in {fit_dir}; run 'vcpanel fit' first")
    out = Path(args.out) if args.out else fit_dir / "bands"
    out.mkdir(parents=True, exist_ok=True)
    panel = Path(args.panel or summary["panel"])
    if sha256(panel) != summary["panel_sha256"]:
        raise CliError(f"{panel} differs from the panel used by the fit (sha256 mismatch)")
    data = load_panel_csv(panel, summary["regressors"])
    if summary["standardize"]:
        data = data.standardized()[0]
    cfg = FitConfig(**summary["fit_config"])
    selected = summary["selected_index"]
    if not selected:
        raise CliError("the fit selected no regressors; nothing to band")
    post = post_selection_fit(data, selected, summary["r"], cfg)
    bands = bootstrap_bands(data, post, args.b_reps, grid=_grid(args), level=args.level,
                            seed=args.seed, scheme=args.scheme, threads=args.threads)
    names = data.regressor_names
    rows = []
    for c in bands.curves:
        rows += [[names[c.regressor], _fmt(z), _fmt(p), _fmt(lo), _fmt(hi)]
                 for z, p, lo, hi in zip(c.grid, c.point, c.lower, c.upper)]
    _write_csv(out / "bands.csv", ["regressor", "z", "point", "lower", "upper"], rows)
    _write_json(out / "bands.json", {"b_reps": args.b_reps, "level": args.level,
                                     "scheme": args.scheme, "seed": args.seed,
                                     "n_failed": bands.n_failed})
    _write_manifest(out, args, ["bands.csv", "bands.json"], inputs=[panel, fit_dir / "fit.json"])
    return _exit_for(bands.n_failed, args)


# ---------------------------------------------------------------- parser

def _common(p: argparse.ArgumentParser, seed_help="random seed") -> None:
    p.add_argument("--out", help="output directory (default $VCPANEL_OUT or ./vcpanel-out)")
    p.add_argument("--config", help="flat key=value file with default flag values")
    p.add_argument("--seed", type=int, default=0, help=seed_help)
    p.add_argument("--threads", type=_positive_int, default=1, help="worker processes")
    p.add_argument("--allow-nonconverged", action="store_true",
                   help="exit 0 even if some fit hit max_iter")
    p.add_argument("-v", "--verbose", action="store_true")


def _estimation(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("estimation")
    g.add_argument("--m", type=_positive_int, default=None,
                   help="sieve truncation (default floor(1.2 (NT)^(1/6)))")
    g.add_argument("--tol", type=float, default=1e-6)
    g.add_argument("--max-iter", type=_positive_int, default=500)
    g.add_argument("--n-starts", type=_positive_int, default=3)
    g.add_argument("--regime", type=_case, default=None, help="ld or hd BIC (default by p)")
    g.add_argument("--n-grid", type=_positive_int, default=40, help="number of nu values")
    g.add_argument("--nu-low", type=float, default=1e-4, help="grid bottom, in units of s")
    g.add_argument("--nu-high", type=float, default=1e1, help="grid top, in units of s")


def _grid_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("z grid")
    g.add_argument("--grid-lo", type=float, default=-1.0)
    g.add_argument("--grid-hi", type=float, default=2.0)
    g.add_argument("--grid-n", type=int, default=63)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vcpanel", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw one LD/HD panel")
    _common(p)
    p.add_argument("--n", type=int, default=40, help="units")
    p.add_argument("--t", type=int, default=40, help="periods")
    p.add_argument("--case", type=_case, default="LD")
    p.add_argument("--r-true", type=int, default=3)
    p.add_argument("--noise-scale", type=float, default=1.0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("mc", help="Monte Carlo selection study")
    _common(p)
    _estimation(p)
    p.add_argument("--case", type=_case, default="LD")
    p.add_argument("--grid-sizes", type=_int_list, default=[40], help="N=T sizes, e.g. 40,80")
    p.add_argument("--reps", type=_positive_int, default=100)
    p.add_argument("--r-true", type=int, default=3)
    p.add_argument("--noise-scale", type=float, default=1.0)
    p.add_argument("--select-r", action="store_true", help="choose r by PIC in each replication")
    p.add_argument("--r-max", type=_positive_int, default=6)
    p.add_argument("--emit-panel", type=int, default=None, metavar="K",
                   help="also write replication K's panel for each size")
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("fit", help="select regressors and fit a panel CSV")
    _common(p, "seed of the random factor starts")
    _estimation(p)
    _grid_args(p)
    p.add_argument("--panel", required=True, help="CSV with unit,period,y,z,<regressors>")
    p.add_argument("--regressors", help="comma-separated subset of regressor columns")
    p.add_argument("--r", type=_r, default=3, help="number of factors or 'auto' (PIC)")
    p.add_argument("--r-max", type=_positive_int, default=6)
    p.add_argument("--nu", type=_nu, default="auto", help="'auto' (BIC path) or a fixed nu")
    p.add_argument("--standardize", action="store_true", help="scale regressors to unit sd")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("bands", help="bootstrap bands for a previous fit")
    _common(p, "bootstrap seed")
    _grid_args(p)
    p.add_argument("--fit-dir", required=True, help="output directory of 'vcpanel fit'")
    p.add_argument("--panel", help="panel CSV (default: path recorded by the fit)")
    p.add_argument("-B", "--b-reps", type=_positive_int, default=200)
    p.add_argument("--level", type=_level, default=0.95)
    p.add_argument("--scheme", choices=("iid", "unit"), default="iid")
    p.set_defaults(func=cmd_bands)
    return parser


def _read_config(path: str) -> dict:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}")
    try:
        parser.read_string("[vcpanel]\n" + text)
    except configparser.Error as exc:
        raise CliError(f"bad config file {path}: {exc}")
    return {k.replace("-", "_"): v for k, v in parser["vcpanel"].items()}


def _apply_config(sub: argparse.ArgumentParser, path: str) -> None:
    """Install values from a config file as the subcommand's defaults."""
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, raw in _read_config(path).items():
        action = actions.get(key)
        if action is None or key in ("config", "help", "func"):
            raise CliError(f"unknown key {key!r} in {path}")
        if action.nargs == 0:
            defaults[key] = raw.strip().lower() in ("1", "true", "yes", "on")
            continue
        try:
            defaults[key] = action.type(raw) if action.type else raw
        except (argparse.ArgumentTypeError, ValueError) as exc:
            raise CliError(f"{path}: bad value for {key}: {exc}")
        if action.choices is not None and defaults[key] not in action.choices:
            raise CliError(f"{path}: {key} must be one of {list(action.choices)}")
    sub.set_defaults(**defaults)
    for a in sub._actions:
        if a.dest in defaults:
            a.required = False


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    command = next((a for a in argv if a in SUBCOMMANDS), None)
    if known.config and command:
        try:
            _apply_config(parser._subparsers._group_actions[0].choices[command], known.config)
        except CliError as exc:
            print(f"vcpanel {command}: error: {exc}", file=sys.stderr)
            return EXIT_INPUT
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CliError, PanelError, ValueError, OSError, np.linalg.LinAlgError) as exc:
        print(f"vcpanel {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
