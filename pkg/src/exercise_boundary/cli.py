"""Command-line front end.

    exercise-boundary solve|benchmark|converge|sweep|price [--config run.json]
                      [--out DIR] [--override key.path=value ...] [--jobs N]

The config is one JSON document with the blocks of :data:`DEFAULT_CONFIG`;
missing keys take the defaults, unknown keys are rejected.  A run manifest
can be fed back through ``--config`` to repeat the run.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import math
import os
import platform
import sys
import time
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .analysis import SWEEP_FAMILIES, L2_VARIANTS, convergence_study, curve_distance, parameter_sweep
from .errors import BoundaryError, ConfigError, NonConvergenceError
from .integral_benchmark import METHODS, IntegralGrid, solve_integral_equation
from .landau import CSV_FLOAT, Grid, MarketParams, option_price, write_snapshots_csv
from .splitting_solver import BOUNDARY_UPDATES, SolverControls, solve
from .volatility import Constant, VolatilitySpec, spec_from_dict

__all__ = ["DEFAULT_CONFIG", "RunConfig", "load_config", "run", "main"]

log = logging.getLogger("exercise_boundary")

COMMANDS = ("solve", "benchmark", "converge", "sweep", "price")

DEFAULT_CONFIG = {
    "market": {"e_strike": 10.0, "r_rate": 0.1, "q_div": 0.05, "t_mat": 1.0},
    "volatility": {"model": "constant", "sigma_hat": 0.2},
    "grid": {"x_len": 3.0, "n_space": 750, "m_time": 225000},
    "controls": {
        "micro_tol": 1e-7,
        "max_micro": 50,
        "store_every": None,
        "boundary_update": "secant",
        "relaxation": 1.0,
    },
    "benchmark": {"m": 200, "spacing": "uniform", "quad_nodes": 8, "tol": 1e-10, "method": "march", "damping": 1.0},
    "converge": {
        "h_list": [0.03, 0.012, 0.006, 0.004, 0.003],
        "cfl_ratio": 0.5,
        "reference_m": 800,
        "l2_variant": "grid",
    },
    "sweep": {
        "family": "rapm",
        "R_list": [1, 2, 5, 10, 20, 40, 100],
        "a_list": [0.01, 0.02, 0.05, 0.1, 0.2, 0.35],
        "C": 0.01,
        "l2_variant": "continuous",
    },
    "price": {"S": [5.0, 8.0, 10.0, 12.0, 15.0, 20.0, 25.0]},
}


# --------------------------------------------------------------------------- #
#  Config handling
# --------------------------------------------------------------------------- #


def _merge(base: dict, extra: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in extra.items():
        kpath = f"{path}.{key}" if path else key
        if key == "volatility" and not path:
            # free-form block, checked by spec_from_dict; naming another model drops the old keys
            if not isinstance(val, dict):
                raise ConfigError(kpath, "expected an object")
            same = val.get("model", out[key].get("model")) == out[key].get("model")
            out[key] = {**out[key], **val} if same else dict(val)
        elif key not in base:
            raise ConfigError(kpath, "unknown key")
        elif isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(kpath, "expected an object")
            out[key] = _merge(base[key], val, kpath)
        else:
            out[key] = val
    return out


def _parse_override(item: str) -> tuple[list[str], object]:
    if "=" not in item:
        raise ConfigError(item, "override must look like key.path=value")
    key, raw = item.split("=", 1)
    try:
        val = json.loads(raw)
    except json.JSONDecodeError:
        val = raw
    return key.strip().split("."), val


def apply_overrides(cfg: dict, overrides: list[str]) -> dict:
    for item in overrides:
        keys, val = _parse_override(item)
        nested: object = val
        for k in reversed(keys):
            nested = {k: nested}
        cfg = _merge(cfg, nested)
    return cfg


def load_config(path: str | None, overrides: list[str] = ()) -> dict:
    """Defaults, then the JSON file (or the ``config`` block of a manifest), then overrides."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError("--config", f"invalid JSON at line {exc.lineno}: {exc.msg}") from exc
        if not isinstance(data, dict):
            raise ConfigError("--config", "top level must be an object")
        if "results_index" in data and "config" in data:
            data = data["config"]
        cfg = _merge(cfg, data)
    return apply_overrides(cfg, list(overrides))


def _num(block: dict, key: str, path: str, kind=float):
    val = block[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{path}.{key}", f"expected a number, got {val!r}")
    if kind is int:
        if float(val) != int(val):
            raise ConfigError(f"{path}.{key}", f"expected an integer, got {val!r}")
        return int(val)
    if not math.isfinite(val):
        raise ConfigError(f"{path}.{key}", "must be finite")
    return float(val)


def _num_list(block: dict, key: str, path: str) -> list[float]:
    val = block[key]
    if not isinstance(val, list) or not val:
        raise ConfigError(f"{path}.{key}", "expected a non-empty list of numbers")
    return [_num({key: v}, key, path) for v in val]


def _choice(block: dict, key: str, path: str, allowed) -> str:
    if block[key] not in allowed:
        raise ConfigError(f"{path}.{key}", f"expected one of {list(allowed)}, got {block[key]!r}")
    return block[key]


def _build(path: str, factory, **kwargs):
    try:
        return factory(**kwargs)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        # validation messages start with the offending field name when there is one
        field = str(exc).split(" ", 1)[0]
        raise ConfigError(f"{path}.{field}" if field in kwargs else path, str(exc)) from exc


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration plus the raw resolved dictionary."""

    raw: dict
    market: MarketParams
    model: VolatilitySpec
    grid: Grid
    controls: SolverControls

    @classmethod
    def from_dict(cls, cfg: dict) -> "RunConfig":
        m = cfg["market"]
        market = _build(
            "market",
            MarketParams,
            **{k: _num(m, k, "market") for k in ("e_strike", "r_rate", "q_div", "t_mat")},
        )
        model = spec_from_dict(cfg["volatility"], default_rate=market.r_rate, path="volatility")
        g = cfg["grid"]
        grid = _build(
            "grid",
            Grid,
            x_len=_num(g, "x_len", "grid"),
            n_space=_num(g, "n_space", "grid", int),
            m_time=_num(g, "m_time", "grid", int),
            t_mat=market.t_mat,
        )
        try:
            grid.check_market(market)
        except ValueError as exc:
            raise ConfigError("grid.x_len", str(exc)) from exc
        c = cfg["controls"]
        controls = _build(
            "controls",
            SolverControls,
            micro_tol=_num(c, "micro_tol", "controls"),
            max_micro=_num(c, "max_micro", "controls", int),
            store_every=None if c["store_every"] is None else _num(c, "store_every", "controls", int),
            boundary_update=_choice(c, "boundary_update", "controls", BOUNDARY_UPDATES),
            relaxation=_num(c, "relaxation", "controls"),
        )
        cls._check_blocks(cfg)
        return cls(cfg, market, model, grid, controls)

    @staticmethod
    def _check_blocks(cfg: dict) -> None:
        b = cfg["benchmark"]
        if _num(b, "m", "benchmark", int) < 1:
            raise ConfigError("benchmark.m", "must be >= 1")
        _choice(b, "spacing", "benchmark", ("uniform", "graded"))
        _choice(b, "method", "benchmark", METHODS)
        if _num(b, "quad_nodes", "benchmark", int) < 1:
            raise ConfigError("benchmark.quad_nodes", "must be >= 1")
        if not _num(b, "tol", "benchmark") > 0:
            raise ConfigError("benchmark.tol", "must be positive")
        if not 0 < _num(b, "damping", "benchmark") <= 1:
            raise ConfigError("benchmark.damping", "must lie in (0, 1]")
        v = cfg["converge"]
        hs = _num_list(v, "h_list", "converge")
        if any(h <= 0 for h in hs) or any(b >= a for a, b in zip(hs, hs[1:])):
            raise ConfigError("converge.h_list", "must be positive and strictly decreasing")
        if not _num(v, "cfl_ratio", "converge") > 0:
            raise ConfigError("converge.cfl_ratio", "must be positive")
        if _num(v, "reference_m", "converge", int) < 1:
            raise ConfigError("converge.reference_m", "must be >= 1")
        _choice(v, "l2_variant", "converge", L2_VARIANTS)
        s = cfg["sweep"]
        _choice(s, "family", "sweep", SWEEP_FAMILIES)
        for key in ("R_list", "a_list"):
            ps = _num_list(s, key, "sweep")
            if any(p <= 0 for p in ps) or any(b <= a for a, b in zip(ps, ps[1:])):
                raise ConfigError(f"sweep.{key}", "must be positive and strictly increasing")
        if not _num(s, "C", "sweep") >= 0:
            raise ConfigError("sweep.C", "must be >= 0")
        _choice(s, "l2_variant", "sweep", L2_VARIANTS)
        if any(x <= 0 for x in _num_list(cfg["price"], "S", "price")):
            raise ConfigError("price.S", "asset prices must be positive")


# --------------------------------------------------------------------------- #
#  Commands
# --------------------------------------------------------------------------- #


class _Run:
    def __init__(self, out: Path):
        self.out = out
        self.files: dict[str, str] = {}
        self.timings: dict[str, float] = {}
        self.results: dict[str, object] = {}

    def path(self, key: str, name: str) -> Path:
        self.files[key] = name
        return self.out / name

    def timed(self, key: str, fn, *args, **kwargs):
        t0 = time.perf_counter()
        try:
            return fn(*args, **kwargs)
        finally:
            self.timings[key] = time.perf_counter() - t0


def _write_rows(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(v if isinstance(v, str) else CSV_FLOAT.format(v) for v in row) + "\n")


def _solve_and_write(rc: RunConfig, run: _Run):
    res = run.timed("solve", solve, rc.market, rc.model, rc.grid, rc.controls)
    res.curve.to_csv(run.path("boundary", "boundary.csv"))
    write_snapshots_csv(run.path("pi_snapshots", "pi_snapshots.csv"), res.snapshots, rc.grid)
    rep = res.report
    _write_rows(
        run.path("report", "report.csv"),
        ["tau", "micro_iterations", "residual"],
        ((t, float(n), r) for t, n, r in zip(rc.grid.taus[1:], rep.micro_counts, rep.residuals)),
    )
    run.results.update(
        rho_final=res.curve.final,
        mean_micro=rep.mean_micro,
        max_micro=rep.max_micro,
        far_field_flags=rep.far_field_flags,
        min_margin=min(rep.margins) if rep.margins else None,
    )
    return res


def _integral_grid(cfg: dict, t_mat: float) -> IntegralGrid:
    b = cfg["benchmark"]
    make = IntegralGrid.uniform if b["spacing"] == "uniform" else IntegralGrid.graded
    return make(t_mat, int(b["m"]), int(b["quad_nodes"]))


def cmd_solve(rc: RunConfig, run: _Run, jobs: int) -> None:
    _solve_and_write(rc, run)


def cmd_benchmark(rc: RunConfig, run: _Run, jobs: int) -> None:
    if not isinstance(rc.model, Constant):
        raise ConfigError("volatility.model", "benchmark needs the constant model")
    res = _solve_and_write(rc, run)
    b = rc.raw["benchmark"]
    ref = run.timed(
        "integral",
        solve_integral_equation,
        rc.market,
        rc.model.sigma_hat,
        _integral_grid(rc.raw, rc.market.t_mat),
        tol=float(b["tol"]),
        method=b["method"],
        damping=float(b["damping"]),
    )
    ref.to_csv(run.path("integral_boundary", "integral_boundary.csv"))
    rel = np.abs(ref(res.curve.taus) - res.curve.rhos) / ref(res.curve.taus)
    d = curve_distance(res.curve, ref)
    summary = {
        "rho_final_splitting": res.curve.final,
        "rho_final_integral": ref.final,
        "end_relative_gap": abs(res.curve.final - ref.final) / ref.final,
        "sup_relative_deviation": float(rel.max()),
        "dist_linf": d.l_inf,
        "dist_l2": d.l_2,
    }
    _write_rows(run.path("summary", "benchmark_summary.csv"), ["metric", "value"], summary.items())
    run.results.update(summary)


def _long_curves(path: Path, label: str, curves: dict) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"{label},tau,rho\n")
        for key in sorted(curves):
            c = curves[key]
            k = CSV_FLOAT.format(key)
            for t, r in zip(c.taus, c.rhos):
                fh.write(f"{k},{CSV_FLOAT.format(t)},{CSV_FLOAT.format(r)}\n")


def cmd_converge(rc: RunConfig, run: _Run, jobs: int) -> None:
    if not isinstance(rc.model, Constant):
        raise ConfigError("volatility.model", "converge needs the constant model")
    v = rc.raw["converge"]
    ref = run.timed(
        "integral",
        solve_integral_equation,
        rc.market,
        rc.model.sigma_hat,
        IntegralGrid.graded(rc.market.t_mat, int(v["reference_m"]), int(rc.raw["benchmark"]["quad_nodes"])),
        tol=float(rc.raw["benchmark"]["tol"]),
    )
    rep = run.timed(
        "study",
        convergence_study,
        rc.market,
        rc.model.sigma_hat,
        v["h_list"],
        float(v["cfl_ratio"]),
        rc.controls,
        reference=ref,
        x_len=rc.grid.x_len,
        l2_variant=v["l2_variant"],
        jobs=jobs,
    )
    rep.to_csv(run.path("table", "convergence.csv"))
    ref.to_csv(run.path("reference", "integral_boundary.csv"))
    _long_curves(run.path("curves", "curves.csv"), "h", rep.curves)
    run.results["failed_rows"] = {CSV_FLOAT.format(r.h): r.error for r in rep.rows if r.error}


def cmd_sweep(rc: RunConfig, run: _Run, jobs: int) -> None:
    s = rc.raw["sweep"]
    params = s["R_list"] if s["family"] == "rapm" else s["a_list"]
    rep = run.timed(
        "sweep",
        parameter_sweep,
        rc.market,
        rc.grid,
        s["family"],
        params,
        sigma_hat=rc.model.sigma_hat,
        c_cost=float(s["C"]),
        controls=rc.controls,
        l2_variant=s["l2_variant"],
        jobs=jobs,
    )
    rep.to_csv(run.path("table", "sweep.csv"))
    _long_curves(run.path("curves", "curves.csv"), "param", rep.curves)
    run.results["failed_rows"] = {CSV_FLOAT.format(r.param): r.error for r in rep.rows if r.error}


def cmd_price(rc: RunConfig, run: _Run, jobs: int) -> None:
    res = _solve_and_write(rc, run)
    quotes = [(s, option_price(res.final_state, s, rc.market, rc.grid)) for s in rc.raw["price"]["S"]]
    _write_rows(
        run.path("prices", "prices.csv"),
        ["S", "value", "exercised"],
        ((float(s), q.value, "1" if q.exercised else "0") for s, q in quotes),
    )


_COMMANDS = {
    "solve": cmd_solve,
    "benchmark": cmd_benchmark,
    "converge": cmd_converge,
    "sweep": cmd_sweep,
    "price": cmd_price,
}


def _versions() -> dict:
    import numba

    return {
        "exercise_boundary": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
    }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="exercise-boundary", description=__doc__.split("\n\n")[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON config or a previous manifest.json")
    p.add_argument("--out", help="output directory (default ./out/<command>-<timestamp>)")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE", help="dotted key, JSON value")
    p.add_argument("--jobs", type=int, default=None, help="parallel solver runs for converge/sweep")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _error_line(exc: BaseException) -> str:
    kind = type(exc).__name__
    if isinstance(exc, ConfigError):
        return f"error: {kind}: key={exc.path}: {str(exc).split(': ', 1)[-1]}"
    level = getattr(exc, "level", None)
    where = f" level={level}" if level is not None else ""
    return f"error: {kind}:{where} {exc}".replace("\n", " ")


def run(argv: list[str] | None = None) -> int:
    """Parse ``argv``, execute the command and return the exit status."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config, args.override)
        rc = RunConfig.from_dict(cfg)
        if args.jobs is not None and args.jobs < 1:
            raise ConfigError("--jobs", "must be >= 1")
    except ConfigError as exc:
        print(_error_line(exc), file=sys.stderr)
        return 2

    stamp = datetime.now().strftime("%Y%m%d-%H%M%S")
    out = Path(args.out) if args.out else Path("out") / f"{args.command}-{stamp}"
    out.mkdir(parents=True, exist_ok=True)
    run_ = _Run(out)
    jobs = args.jobs or os.cpu_count() or 1
    t0 = time.perf_counter()
    status = 0
    try:
        _COMMANDS[args.command](rc, run_, jobs)
    except (BoundaryError, ValueError, FloatingPointError) as exc:
        print(_error_line(exc), file=sys.stderr)
        if isinstance(exc, NonConvergenceError) and exc.partial is not None and hasattr(exc.partial, "to_csv"):
            exc.partial.to_csv(run_.path("partial_boundary", "partial_boundary.csv"))
        run_.results["error"] = _error_line(exc)
        status = 1
    run_.timings["total"] = time.perf_counter() - t0
    manifest = {
        "config": rc.raw,
        "timings": run_.timings,
        "results_index": {"command": args.command, "files": run_.files, "results": run_.results},
        "versions": _versions(),
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(_jsonable(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")
    if status == 0:
        log.info("wrote %s", out)
    return status


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
