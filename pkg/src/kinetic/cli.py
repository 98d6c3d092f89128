"""Experiment harness: ``kinetic run`` and ``kinetic sweep``.

A config is one JSON object describing one experiment::

    {
      "experiment": "coefficients",
      "seed": 0,
      "distribution": {"kind": "maxwellian", "temperature": 1.0, "density": 1.0},
      "potential": {"profile": "yukawa", "amplitude": 1.0, "length": 1.0, "core": 0.5},
      "scaling": {"family": "landau", "epsilon": 0.05, "L": 6.0},
      "regime": {"tag": "finite_range", "model": "rayleigh"},
      "params": {"v": [[1.0, 0.0, 0.0]]}
    }

Every run writes results.json (sorted keys, no timing), one CSV per table and
manifest.json (config, its hash, seed, versions, wall time).  Exit status is
0 on success, 2 on a validation error and 3 on a numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import platform
import sys
import time
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from . import coefficients as coef
from . import dielectric as diel
from . import fluctuations as fluct
from . import forcefield as ff
from . import langevin as lg
from . import pointprocess as pp
from . import rng as krng
from .distributions import Maxwellian, SpeciesSet, distribution_from_config
from .errors import KineticError, NumericalError, ValidationError
from .parallel import default_workers, ordered_map
from .potentials import potential_from_config, scaled_from_config

EXPERIMENTS = ("sample", "deflection", "dielectric", "coefficients", "fluctuations", "compare")
EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3


class ConfigError(ValidationError):
    """Validation failure tied to a field path of the config."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}", op="config")
        self.path = path


# ---------------------------------------------------------------- config handling


def canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(canonical(cfg).encode("utf-8")).hexdigest()


def load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ConfigError("<file>", f"no such file {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON ({exc})")
    if not isinstance(cfg, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    # a manifest carries the config it ran
    if "config" in cfg and "config_hash" in cfg:
        cfg = cfg["config"]
    return cfg


def _field_path(section: str, sub: dict, exc: Exception) -> str:
    msg = str(exc).lower()
    for key in sub if isinstance(sub, dict) else ():
        if key.lower() in msg or key.lower().rstrip("s") in msg:
            return f"{section}.{key}"
    return section


def _build(section: str, sub, fn):
    try:
        return fn(sub)
    except ConfigError:
        raise
    except (ValidationError, KeyError, TypeError, ValueError) as exc:
        text = exc.args[0] if isinstance(exc, KeyError) else str(exc)
        if isinstance(exc, KeyError):
            raise ConfigError(f"{section}.{text}", "missing field")
        raise ConfigError(_field_path(section, sub, exc), text)


def _vec(x, path: str) -> np.ndarray:
    try:
        a = np.asarray(x, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(path, "expected a numeric 3-vector")
    if a.shape != (3,) or not np.all(np.isfinite(a)):
        raise ConfigError(path, "expected a finite 3-vector")
    return a


def _vecs(x, path: str) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2 or a.shape[1] != 3:
        raise ConfigError(path, "expected a list of 3-vectors")
    return a


def _num(params: dict, key: str, default=None, positive: bool = False, integer: bool = False):
    val = params.get(key, default)
    if val is None:
        raise ConfigError(f"params.{key}", "missing field")
    try:
        val = int(val) if integer else float(val)
    except (TypeError, ValueError):
        raise ConfigError(f"params.{key}", "expected a number")
    if positive and not val > 0:
        raise ConfigError(f"params.{key}", "must be positive")
    return val


@dataclass
class Context:
    cfg: dict
    seed: int
    workers: int
    base_dir: Path
    g: object = None
    potential: object = None
    scaled: object = None
    regime: object = None
    params: dict = field(default_factory=dict)


def prepare(cfg: dict, seed: int | None, workers: int, base_dir: Path) -> Context:
    """Validate every config section before any compute starts."""
    exp = cfg.get("experiment")
    if exp not in EXPERIMENTS:
        raise ConfigError("experiment", f"must be one of {', '.join(EXPERIMENTS)}")
    s = cfg.get("seed", 0) if seed is None else seed
    try:
        s = int(s)
    except (TypeError, ValueError):
        raise ConfigError("seed", "expected an integer")
    if s < 0:
        raise ConfigError("seed", "must be non-negative")
    ctx = Context(cfg, s, workers, base_dir)
    params = cfg.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("params", "expected an object")
    ctx.params = params
    if "distribution" not in cfg:
        raise ConfigError("distribution", "missing field")
    ctx.g = _build("distribution", cfg["distribution"], partial(distribution_from_config, base_dir=base_dir))
    if "potential" in cfg:
        ctx.potential = _build("potential", cfg["potential"], potential_from_config)
        ctx.scaled = _build("scaling", cfg.get("scaling", {}), partial(scaled_from_config, ctx.potential))
    if "regime" in cfg:
        ctx.regime = _build("regime", cfg["regime"], lambda r: coef.Regime(**r))
    needs_potential = {"deflection", "dielectric", "fluctuations", "compare"}
    if exp in needs_potential and ctx.potential is None and not (exp == "fluctuations" and "response" not in params):
        raise ConfigError("potential", "missing field")
    if exp in ("coefficients", "compare") and ctx.regime is None:
        raise ConfigError("regime", "missing field")
    return ctx


# ---------------------------------------------------------------- experiments


def _species(ctx: Context) -> SpeciesSet:
    kind = ctx.params.get("species", "single")
    if kind == "single":
        return SpeciesSet.single(ctx.g)
    if kind == "neutral_pair":
        return SpeciesSet.neutral_pair(ctx.g)
    raise ConfigError("params.species", "must be 'single' or 'neutral_pair'")


def _count_job(species, R, tau, lo, hi, seed, i):
    cfg = pp.sample_poisson(species, R, int(krng.substream(seed, 3, i).integers(2**62)))
    moved = pp.free_flow(cfg, tau)
    return [pp.box_counts(cfg, lo, hi, k) for k in range(len(species))] + \
           [pp.box_counts(moved, lo, hi, k) for k in range(len(species))]


def run_sample(ctx: Context):
    p = ctx.params
    species = _species(ctx)
    R = _num(p, "R", positive=True)
    n = _num(p, "n_samples", 100, positive=True, integer=True)
    tau = _num(p, "tau", 0.0)
    lo = _vec(p.get("box_lo", [-1, -1, -1]), "params.box_lo")
    hi = _vec(p.get("box_hi", [1, 1, 1]), "params.box_hi")
    if np.any(hi <= lo):
        raise ConfigError("params.box_hi", "must exceed box_lo componentwise")
    rows = np.array(ordered_map(partial(_count_job, species, R, tau, lo, hi, ctx.seed), range(n), ctx.workers))
    ns = len(species)
    expected = [sp.dist.density() * float(np.prod(hi - lo)) for sp in species]
    res = {"expected": expected, "mean_t0": rows[:, :ns].mean(0).tolist(), "mean_tau": rows[:, ns:].mean(0).tolist(),
           "var_t0": rows[:, :ns].var(0, ddof=1).tolist(), "var_tau": rows[:, ns:].var(0, ddof=1).tolist(),
           "n_samples": n, "tau": tau}
    header = ["sample"] + [f"count_t0_{k}" for k in range(ns)] + [f"count_tau_{k}" for k in range(ns)]
    table = [[i, *map(int, r)] for i, r in enumerate(rows)]
    summary = {"mean_t0": res["mean_t0"][0], "mean_tau": res["mean_tau"][0]}
    return res, {"counts": (header, table)}, summary


def run_deflection(ctx: Context):
    p = ctx.params
    species = _species(ctx)
    V = _vec(p.get("V", [1.0, 0.0, 0.0]), "params.V")
    T = _num(p, "T", positive=True)
    n = _num(p, "n_samples", 100, positive=True, integer=True)
    kw = {k: p[k] for k in ("method", "r_out", "r_in", "m_target", "R", "dt") if k in p}
    ens = ff.deflection_mc(species, ctx.scaled, V, T, n, ctx.seed, workers=ctx.workers, **kw)
    eps = ctx.scaled.amp_length[0]
    res = {"T": T, "covariance": ens.covariance.tolist(), "covariance_se": ens.std_error.tolist(),
           "mean": ens.mean.tolist(), "trace": ens.trace, "trace_se": ens.trace_std_error,
           "trace_over_eps2T": ens.trace / (eps**2 * T), "meta": ens.meta}
    table = [[i, *s] for i, s in enumerate(ens.samples)]
    summary = {"trace": ens.trace, "trace_se": ens.trace_std_error, "trace_over_eps2T": res["trace_over_eps2T"]}
    return res, {"deflections": (["sample", "dx", "dy", "dz"], table)}, summary


def run_dielectric(ctx: Context):
    p = ctx.params
    model = diel.DielectricFunction(ctx.g, ctx.potential, p.get("model", "sigma"),
                                    sigma=float(p.get("sigma", 0.0)), L=float(p.get("L", 1.0)))
    if "k" in p:
        ks = _vecs(p["k"], "params.k")
    else:
        axis = _vec(p.get("axis", [1.0, 0.0, 0.0]), "params.axis")
        axis = axis / np.linalg.norm(axis)
        mags = np.geomspace(_num(p, "k_min", 0.05, positive=True), _num(p, "k_max", 5.0, positive=True),
                            _num(p, "n_k", 12, positive=True, integer=True))
        ks = mags[:, None] * axis
    n_omega = _num(p, "n_omega", 2001, positive=True, integer=True)
    rep = diel.penrose_check(model, ks, n_omega=n_omega)
    res = {"stable": bool(rep.stable), "report": json.loads(rep.to_json())}
    table = [[*k, w] for k, w in zip(ks, np.atleast_1d(rep.winding))]
    if p.get("xi_time"):
        xt = p["xi_time"]
        x = np.asarray(xt.get("x", np.linspace(-8, 8, 65)), dtype=float)
        t = np.asarray(xt.get("t", np.linspace(0.0, 12.0, 25)), dtype=float)
        grid = diel.xi_time(model, x, _vec(xt.get("w0", [0, 0, 0]), "params.xi_time.w0"), t)
        res["xi_time"] = {"envelope_rate": grid.envelope_rate(), "mass": grid.mass, "a_gap": grid.a_gap}
    summary = {"stable": int(rep.stable), "max_winding": int(np.max(np.abs(np.atleast_1d(rep.winding))))}
    return res, {"winding": (["kx", "ky", "kz", "winding"], table)}, summary


def run_coefficients(ctx: Context):
    p = ctx.params
    vs = _vecs(p.get("v", [0.0, 0.0, 0.0]), "params.v")
    opt = coef.Options(**{k: int(v) for k, v in p.get("options", {}).items()})
    out, table = [], []
    gap = None
    for v in vs:
        r = coef.coefficients(ctx.regime, v, ctx.potential, ctx.g, opt)
        item = r.to_dict()
        if isinstance(ctx.g, Maxwellian):
            pred = r.D @ (v - ctx.g.u) / ctx.g.temperature
            scale = max(np.linalg.norm(r.Lambda), np.linalg.norm(pred))
            floor = 1e-12 * np.trace(r.D) / np.sqrt(ctx.g.temperature)
            item["einstein_residual"] = 0.0 if scale <= floor else float(np.linalg.norm(r.Lambda - pred) / scale)
        if ctx.regime.tag == "finite_range" and ctx.regime.model == "interacting":
            ray = coef.coefficients(coef.Regime("finite_range"), v, ctx.potential, ctx.g, opt)
            scale = max(np.abs(ray.D).max(), 1e-300)
            g_v = float(max(np.abs(r.D - ray.D).max() / scale,
                            np.abs(r.Lambda - ray.Lambda).max() / max(np.abs(ray.Lambda).max(), scale)))
            item["rayleigh_gap"] = g_v
            gap = g_v if gap is None else max(gap, g_v)
        out.append(item)
        table.append([*v, *r.D.ravel(), *r.Lambda])
    header = ["vx", "vy", "vz"] + [f"D{i}{j}" for i in range(3) for j in range(3)] + ["Lx", "Ly", "Lz"]
    first = out[0]
    summary = {"D00": first["D"][0][0], "D11": first["D"][1][1], "D22": first["D"][2][2],
               "Lambda0": first["Lambda"][0]}
    if gap is not None:
        summary["rayleigh_gap"] = gap
    return {"results": out}, {"coefficients": (header, table)}, summary


def run_fluctuations(ctx: Context):
    p = ctx.params
    spec = fluct.GaussianFieldSpec(ctx.g, _num(p, "h_y", 0.75, positive=True), _num(p, "n_y", 12, integer=True),
                                   _num(p, "h_w", 0.75, positive=True), _num(p, "w_max", 2.25, positive=True))
    t1, t2 = _num(p, "t1", 1.0), _num(p, "t2", 0.0)
    offs = np.asarray(p.get("offsets", [[0, 0, 0], [1, 0, 0], [1, 1, 0], [2, 0, 0]]), dtype=int)
    n = _num(p, "n_samples", 2000, positive=True, integer=True)
    m, se = fluct.density_correlation(spec, t1, t2, offs, n, ctx.seed, workers=ctx.workers)
    lim = fluct.density_correlation_limit(ctx.g, offs * spec.h_y, t1 - t2)
    rel = (m - lim) / lim
    res = {"mean": m.tolist(), "std_error": se.tolist(), "limit": lim.tolist(), "relative_error": rel.tolist(),
           "offsets": offs.tolist()}
    if "response" in p:
        r = p["response"]
        grid = fluct.ResponseGrid(float(r.get("h_y", 0.5)), float(r.get("half_width", 5.0)))
        field_ = fluct.zeta2_response(grid, ctx.g, ctx.potential, _vec(r.get("V0", [1, 0, 0]), "params.response.V0"),
                                      float(r.get("t", 50.0)))
        res["response_force"] = fluct.response_force(field_, ctx.potential, grid).tolist()
    table = [[*d, a, b, c] for d, a, b, c in zip(offs, m, se, lim)]
    summary = {"max_relative_error": float(np.max(np.abs(rel)))}
    return res, {"density_correlation": (["dx", "dy", "dz", "mean", "std_error", "limit"], table)}, summary


def run_compare(ctx: Context):
    p = ctx.params
    eps = ctx.scaled.amp_length[0] if ctx.scaled is not None else _num(p, "eps", positive=True)
    L = ctx.scaled.amp_length[1] if ctx.scaled is not None else _num(p, "L", 6.0)
    if not isinstance(ctx.g, Maxwellian):
        raise ConfigError("distribution.kind", "compare needs a maxwellian background")
    rep = lg.compare_variance_growth(ctx.regime, ctx.potential, ctx.g, eps, _num(p, "T_macro", 0.5, positive=True),
                                     L=L, v0=_vec(p.get("v0", [1, 0, 0]), "params.v0"),
                                     n_seeds=_num(p, "n_seeds", 500, positive=True, integer=True), seed=ctx.seed,
                                     dt=p.get("dt"), n_paths=_num(p, "n_paths", 4000, integer=True),
                                     n_times=_num(p, "n_times", 20, integer=True), cutoff=p.get("cutoff"),
                                     workers=ctx.workers)
    res = rep.to_json()
    res["meta"].pop("nbody_seconds", None)
    table = [[a, b, c, d, e] for a, b, c, d, e in zip(rep.t, rep.langevin, rep.langevin_se, rep.nbody, rep.nbody_se)]
    summary = {"max_rel_gap": rep.max_rel_gap, "T_kinetic": rep.T_kinetic}
    return res, {"covariance": (["t", "langevin", "langevin_se", "nbody", "nbody_se"], table)}, summary


RUNNERS = {"sample": run_sample, "deflection": run_deflection, "dielectric": run_dielectric,
           "coefficients": run_coefficients, "fluctuations": run_fluctuations, "compare": run_compare}


# ---------------------------------------------------------------- artifacts


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (np.floating, float)):
        return float(x)
    return x


def write_json(path: Path, obj) -> None:
    text = json.dumps(_jsonable(obj), sort_keys=True, indent=2, ensure_ascii=False)
    path.write_text(text + "\n", encoding="utf-8")


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if isinstance(v, (np.integer, np.bool_)):
        return str(int(v))
    return str(v)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(v) for v in r])


def _versions() -> dict:
    return {"kinetic": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def execute(cfg: dict, out: Path, seed: int | None, workers: int, base_dir: Path):
    """Run one experiment into ``out``; returns the summary dict."""
    t0 = time.time()
    ctx = prepare(cfg, seed, workers, base_dir)
    cfg_eff = copy.deepcopy(cfg)
    cfg_eff["seed"] = ctx.seed
    out.mkdir(parents=True, exist_ok=True)
    res, tables, summary = RUNNERS[cfg["experiment"]](ctx)
    res = {"experiment": cfg["experiment"], "seed": ctx.seed, "config_hash": config_hash(cfg_eff), "results": res}
    write_json(out / "results.json", res)
    for name, (header, rows) in tables.items():
        write_csv(out / f"{name}.csv", header, rows)
    write_json(out / "manifest.json", {"config": cfg_eff, "config_hash": config_hash(cfg_eff), "seed": ctx.seed,
                                       "versions": _versions(), "wall_time": time.time() - t0,
                                       "workers": workers, "tables": sorted(tables)})
    return summary


def _default_out(cfg: dict) -> Path:
    return Path("runs") / f"{cfg.get('experiment', 'run')}-{config_hash(cfg)[:10]}"


def _report(exc: KineticError) -> int:
    code = EXIT_VALIDATION if isinstance(exc, ValidationError) else EXIT_NUMERICAL
    print(f"error: {exc}", file=sys.stderr)
    return code


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
        out = Path(args.out) if args.out else _default_out(cfg)
        execute(cfg, out, args.seed, args.workers, Path(args.config).resolve().parent)
    except KineticError as exc:
        return _report(exc)
    return EXIT_OK


def _set_path(cfg: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = cfg
    for k in keys[:-1]:
        if not isinstance(node.get(k), dict):
            raise ConfigError(dotted, "axis does not name a config field")
        node = node[k]
    old = node.get(keys[-1])
    if old is not None and not isinstance(old, (int, float)):
        raise ConfigError(dotted, "axis must name a numeric field")
    node[keys[-1]] = value


def cmd_sweep(args) -> int:
    try:
        cfg = load_config(args.config)
        vals = [v for v in (args.values or "").split(",") if v.strip()]
        if not vals:
            raise ConfigError("--values", "empty values list")
        try:
            values = [float(v) for v in vals]
        except ValueError:
            raise ConfigError("--values", "values must be numeric")
        out = Path(args.out) if args.out else _default_out(cfg).with_name(_default_out(cfg).name + "-sweep")
        base_dir = Path(args.config).resolve().parent
        rows, keys = [], []
        for i, v in enumerate(values):
            c = copy.deepcopy(cfg)
            _set_path(c, args.axis, v)
            try:
                summ = execute(c, out / f"point_{i:03d}", args.seed, args.workers, base_dir)
                status = "ok"
            except NumericalError as exc:
                summ, status = {}, f"numerical_error: {exc}"
            except ValidationError as exc:
                summ, status = {}, f"validation_error: {exc}"
            for k in summ:
                if k not in keys:
                    keys.append(k)
            rows.append((v, status, summ))
        table = [[v, st, *[s.get(k, "") for k in keys]] for v, st, s in rows]
        write_csv(out / "sweep.csv", [args.axis, "status", *keys], table)
        write_json(out / "results.json", {"axis": args.axis, "values": values,
                                          "rows": [{"value": v, "status": st, **s} for v, st, s in rows]})
    except KineticError as exc:
        return _report(exc)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kinetic", description="Kinetic-limit numerical experiments.")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment config")
    r.add_argument("config")
    s = sub.add_parser("sweep", help="run a config over values of one numeric field")
    s.add_argument("config")
    s.add_argument("--axis", required=True, help="dotted config path, e.g. params.T")
    s.add_argument("--values", required=True, help="comma separated numbers")
    for p in (r, s):
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--workers", type=int, default=None, help="worker processes (default: $KINETIC_WORKERS or 1)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.workers is None:
        args.workers = default_workers()
    if args.workers < 1:
        print("error [cli]: --workers must be at least 1", file=sys.stderr)
        return EXIT_VALIDATION
    return cmd_run(args) if args.command == "run" else cmd_sweep(args)


if __name__ == "__main__":
    sys.exit(main())
