"""Command line entry point: ``geomflow <command> [options]``.

Commands: ``curvature``, ``simulate``, ``estimate``, ``verify`` and ``zoo``.
Options may also come from a JSON file given with ``--config``; flags win
over file values, which win over defaults. Exit status is 0 when every
requested check passes, 1 when one fails and 2 for configuration errors.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import __version__
from . import stochastic
from .calculus.fields import default_family, eigenfunction
from .calculus.quadrature import QuadratureError, default_grid
from .estimators import (MetricTensor, est_functional, est_gradient_bismut, est_gradient_parallel,
                         est_gradient_W, est_hessian, est_semigroup, est_tensor_semigroup)
from .geometry.base import ChartPoint, GeometryError
from .geometry.ops import curvature
from .geometry.zoo import ZOO, parse_manifold
from .stochastic import SimConfig, simulate, transport_deviation, write_path_dump
from .verify import (ALL_SUITES, INTEGRAL, POINTWISE, SEMIGROUP, TOLERANCES, SemigroupData,
                     check_b5_limit, check_hd_limit, check_integral, check_pointwise,
                     check_semigroup, classify, geometry_stats, self_test)

SCHEMA = "geomflow.verdict-report"
SCHEMA_VERSION = 1
CSV_COLUMNS = ("suite", "id", "point", "function", "t", "lhs", "rhs", "residual", "stderr", "z", "pass")
ALIASES = {"pointwise": POINTWISE, "integral": INTEGRAL, "semigroup": SEMIGROUP,
           "all": ALL_SUITES, "default": POINTWISE + INTEGRAL}
ESTIMATORS = ("semigroup", "gradient", "gradient-bismut", "gradient-parallel", "hessian",
              "metric", "functional")
# arrays longer than this are summarised in reports
MAX_INLINE = 64


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    manifold: str = "sphere:2:1"
    suites: list = field(default_factory=lambda: list(POINTWISE + INTEGRAL))
    seed: int = 0
    t: list = field(default_factory=lambda: [0.5])
    n_paths: int = 10000
    n_steps: int | None = None
    w2_rule: str = "ito"
    antithetic: bool = False
    workers: int | None = None
    grid: int | None = None
    n_points: int = 20
    n_functions: int = 10
    n_integral_functions: int = 50
    point: str | None = None
    function: str = "Y1"
    tolerances: dict = field(default_factory=dict)
    out: str | None = None
    csv: str | None = None
    deterministic: bool = False

    def validate(self):
        self.suites = expand_suites(self.suites)
        try:
            parse_manifold(self.manifold)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if not self.t or any(not (float(t) > 0) for t in self.t):
            raise ConfigError("t values must be positive")
        self.t = [float(t) for t in self.t]
        if self.n_paths < 2:
            raise ConfigError("need at least two paths")
        if self.n_steps is not None and self.n_steps < 1:
            raise ConfigError("steps must be positive")
        if self.w2_rule not in ("ito", "stratonovich"):
            raise ConfigError(f"unknown W2 rule {self.w2_rule!r}")
        bad = set(self.tolerances) - set(TOLERANCES)
        if bad:
            raise ConfigError(f"unknown tolerance keys: {sorted(bad)}")
        return self

    def sim(self, t):
        return SimConfig(t_final=t, n_paths=self.n_paths, n_steps=self.n_steps, seed=self.seed,
                         w2_rule=self.w2_rule, antithetic=self.antithetic, workers=self.workers)

    def echo(self):
        d = asdict(self)
        # worker count and output paths never change results
        for k in ("workers", "out", "csv"):
            d.pop(k)
        return d


def expand_suites(items):
    out = []
    for item in items:
        for s in (item if isinstance(item, (list, tuple)) else str(item).split(",")):
            s = s.strip()
            if not s:
                continue
            names = ALIASES.get(s, (s,))
            for n in names:
                if n not in ALL_SUITES:
                    raise ConfigError(f"unknown suite {n!r}; known: {', '.join(ALL_SUITES)}")
                if n not in out:
                    out.append(n)
    if not out:
        raise ConfigError("no suites requested")
    return out


def _parse_tol(text):
    out = {}
    for part in text.split(","):
        if not part.strip():
            continue
        key, sep, val = part.partition("=")
        if not sep:
            # a bare number applies to every deterministic tolerance
            return {k: float(key) for k in TOLERANCES}
        out[key.strip()] = float(val)
    return out


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def load_config(args) -> RunConfig:
    """Defaults, then the JSON file, then explicit flags."""
    cfg = {}
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigError("config file must hold a JSON object")
        known = {f.name for f in fields(RunConfig)}
        unknown = set(cfg) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    flags = {
        "manifold": args.manifold, "seed": args.seed, "n_paths": args.paths,
        "n_steps": args.steps, "grid": args.grid, "point": args.point, "function": args.f,
        "out": args.out, "csv": args.csv, "workers": args.workers, "w2_rule": args.rule,
    }
    for k, v in flags.items():
        if v is not None:
            cfg[k] = v
    if args.suites is not None:
        cfg["suites"] = [args.suites]
    if args.t is not None:
        cfg["t"] = _floats(args.t)
    elif isinstance(cfg.get("t"), (int, float)):
        cfg["t"] = [cfg["t"]]
    if args.tol is not None:
        cfg["tolerances"] = {**cfg.get("tolerances", {}), **_parse_tol(args.tol)}
    if args.deterministic:
        cfg["deterministic"] = True
    if args.antithetic:
        cfg["antithetic"] = True
    try:
        return RunConfig(**cfg).validate()
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def resolve_point(m, text):
    """``"x1,x2[@c1,...]"``: chart coordinates, optionally followed by the chart label."""
    if not text:
        return m.default_point()
    coords, _, chart = text.partition("@")
    x = np.array(_floats(coords))
    if len(x) != m.dim:
        raise ConfigError(f"point needs {m.dim} coordinates, got {len(x)}")
    c = np.array(_floats(chart)) if chart else m.default_point().chart
    if len(c) != m.chart_size:
        raise ConfigError(f"chart label needs {m.chart_size} entries")
    p = ChartPoint(x, c)
    m.check_domain(p.coords[None], p.chart[None])
    return p


def resolve_function(m, name, seed=0):
    """``Y1``/``eigen`` (a Laplace eigenfunction) or ``family:i``."""
    if name in ("Y1", "eigen"):
        try:
            return eigenfunction(m)
        except TypeError:
            return default_family(m).sample(1, seed)[0]
    if name.startswith("family:"):
        i = int(name.split(":", 1)[1])
        return default_family(m).sample(i + 1, seed)[i]
    raise ConfigError(f"unknown function {name!r}; use Y1, eigen or family:i")


# ----------------------------------------------------------------------------
# output helpers


def _compact(v):
    """JSON-ready value; large arrays are reduced to shape and max |entry|."""
    if isinstance(v, (list, tuple)) and v and not isinstance(v[0], (dict, str)):
        v = np.asarray(v, dtype=float)
    if isinstance(v, np.ndarray):
        if v.size > MAX_INLINE:
            return {"shape": list(v.shape), "max_abs": _num(np.abs(v).max())}
        return [_num(a) for a in v.reshape(-1)] if v.ndim else _num(v)
    if isinstance(v, dict):
        return {k: _compact(a) for k, a in v.items()}
    if isinstance(v, (float, np.floating, np.integer)):
        return _num(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else str(x)


def check_json(c):
    d = c.to_json()
    for k in ("lhs", "rhs", "point"):
        d[k] = _compact(getattr(c, k) if k != "point" else d[k])
    return d


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    if isinstance(v, dict):
        return f"max_abs={_cell(v.get('max_abs'))}"
    if isinstance(v, (list, tuple)):
        return ";".join(_cell(a) for a in v)
    return str(v)


def write_csv(checks_json, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for c in checks_json:
        w.writerow([_cell(c.get("suite")), c["id"], _cell(c.get("point")), _cell(c.get("function")),
                    _cell(c.get("t")), _cell(c.get("lhs")), _cell(c.get("rhs")),
                    _cell(c.get("residual")), _cell(c.get("stderr")), _cell(c.get("z_score")),
                    _cell(c["pass"])])


def dumps(obj):
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def emit(obj, path=None):
    text = dumps(obj)
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ----------------------------------------------------------------------------
# commands


def run_verify(cfg: RunConfig):
    m = parse_manifold(cfg.manifold)
    tol = {**TOLERANCES, **cfg.tolerances}
    t_start = time.time()
    base = dict(stochastic.COUNTERS)
    timing = {}

    def timed(name, fn, *a, **kw):
        t0 = time.perf_counter()
        out = fn(*a, **kw)
        timing[name] = timing.get(name, 0.0) + time.perf_counter() - t0
        return out

    stats = timed("geometry", geometry_stats, m, seed=cfg.seed)
    checks = timed("self-test", self_test)
    requested = list(cfg.suites)
    # the verdict always needs its three defining suites
    needed = ["A2", "C4", "B3" if m.compact else "B2"]
    pw = [s for s in POINTWISE if s in requested or s in needed]
    integ = [s for s in INTEGRAL if s in requested or s in needed]
    skipped = []
    if pw:
        checks += timed("pointwise", check_pointwise, m, pw, n_points=cfg.n_points,
                        n_functions=cfg.n_functions, seed=cfg.seed, tol=tol)
    if integ:
        if m.compact:
            grid = default_grid(m, cfg.grid)
            checks += timed("integral", check_integral, m, grid, integ,
                            n_functions=cfg.n_integral_functions, seed=cfg.seed, tol=tol, stats=stats)
        else:
            skipped += [s for s in integ if s in requested]
    sg = [s for s in SEMIGROUP if s in requested and s not in ("B5-limit", "HD-limit")]
    if sg or any(s in requested for s in ("B5-limit", "HD-limit")):
        x0 = resolve_point(m, cfg.point)
        f = resolve_function(m, cfg.function, cfg.seed)
        for t in cfg.t:
            if sg:
                sc = cfg.sim(t)
                data = timed("semigroup", SemigroupData, m, x0, f, sc)
                checks += timed("semigroup", check_semigroup, m, x0, sg, f, sc, stats=stats, data=data)
        if "B5-limit" in requested:
            checks.append(timed("semigroup", check_b5_limit, m, x0, f, cfg.sim(1.0), stats=stats))
        if "HD-limit" in requested:
            checks.append(timed("semigroup", check_hd_limit, m, x0, None, cfg.sim(0.2)))
    verdict = classify(m, checks, stats, tol)
    if skipped:
        print(f"skipped on non-compact {m.spec}: {', '.join(skipped)}", file=sys.stderr)
    checks_json = [check_json(c) for c in checks]
    acct = {k: stochastic.COUNTERS[k] - base[k] for k in base}
    report = {
        "schema": SCHEMA, "schema_version": SCHEMA_VERSION, "version": __version__,
        "config": cfg.echo(),
        "manifold": m.spec,
        "geometry": _compact({
            "dim": stats["dim"], "ric_spectrum_sample": stats["ric_sample"],
            "ric_range": [stats["ric_min"], stats["ric_max"]],
            "sect_range": [stats["sect_min"], stats["sect_max"]],
            "nabla_ric_max": stats["nabla_ric_max"], "r_norm_inf": stats["r_norm"]}),
        "checks": checks_json,
        "skipped_suites": skipped,
        "verdict": verdict.to_json(),
        "all_pass": all(c["pass"] for c in checks_json),
        "accounting": {"n_checks": len(checks_json), **acct},
    }
    if not cfg.deterministic:
        report["accounting"].update({
            "wall_seconds": time.time() - t_start,
            "phase_seconds": timing,
            "workers": stochastic.worker_count(cfg.workers),
            "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(t_start))})
    return report


def cmd_verify(cfg):
    report = run_verify(cfg)
    emit(report, cfg.out)
    if cfg.csv:
        with open(cfg.csv, "w", newline="") as fh:
            write_csv(report["checks"], fh)
    v = report["verdict"]
    failed = [c["id"] for c in report["checks"] if not c["pass"]]
    print(f"{report['manifold']}: constant_curvature={v['constant_curvature']} "
          f"einstein={v['einstein']} ricci_parallel={v['ricci_parallel']}", file=sys.stderr)
    if failed:
        print(f"failed checks: {', '.join(failed)}", file=sys.stderr)
    return 0 if report["all_pass"] else 1


def cmd_curvature(cfg, points):
    m = parse_manifold(cfg.manifold)
    out = []
    for text in points or [None]:
        p = resolve_point(m, text)
        cb = curvature(m, p)
        d = m.dim
        sect = {f"{a},{b}": float(cb.riem[a, b, b, a]) for a in range(d) for b in range(a + 1, d)}
        out.append({"point": p.coords.tolist(), "chart": p.chart.tolist(),
                    "ric": cb.ric.matrix.tolist(), "scalar": cb.scal, "sectional_frame_planes": sect,
                    "nabla_ric_max": float(np.abs(cb.nabla_ric).max()),
                    "symmetry_residual": float(cb.symmetry_residual())})
    emit({"manifold": m.spec, "points": out}, cfg.out)
    return 0


def cmd_simulate(cfg, dump=None, track_w2=False):
    m = parse_manifold(cfg.manifold)
    x0 = resolve_point(m, cfg.point)
    f = resolve_function(m, cfg.function, cfg.seed)
    results = []
    for t in cfg.t:
        sc = replace(cfg.sim(t), track_w2=track_w2, record_paths=bool(dump))
        t0 = time.perf_counter()
        ens = simulate(m, x0, sc)
        wall = time.perf_counter() - t0
        g = m.metric(ens.x, ens.chart)
        F = ens.frame
        ortho = float(np.abs(np.swapaxes(F, 1, 2) @ g @ F - np.eye(m.dim)).max())
        st = geometry_stats(m, seed=cfg.seed)
        dev = transport_deviation(ens, st["ric_min"], st["ric_sup"])
        ef = est_semigroup(m, x0, f, sc, ensemble=ens)
        row = {"t": t, "n_paths": ens.n_paths, "n_steps": ens.n_steps, "dt": ens.dt,
               "function": repr(f), "mean_f": _compact(ef.mean), "stderr_f": _compact(ef.stderr),
               "frame_orthonormality_error": ortho,
               "transport_deviation": {k: v for k, v in dev.items() if k != "per_path"},
               "mean_W": ens.W.mean(axis=0).tolist()}
        if ens.W2 is not None:
            row["mean_abs_W2"] = float(np.abs(ens.W2).mean())
        if not cfg.deterministic:
            row["wall_seconds"] = wall
        results.append(row)
        if dump:
            path = dump if len(cfg.t) == 1 else f"{dump}.t{t:g}"
            write_path_dump(path, ens)
    emit({"manifold": m.spec, "x0": x0.coords.tolist(), "seed": cfg.seed, "runs": results}, cfg.out)
    return 0


def cmd_estimate(cfg, kind, vectors, functional):
    m = parse_manifold(cfg.manifold)
    x0 = resolve_point(m, cfg.point)
    f = resolve_function(m, cfg.function, cfg.seed)
    v1, v2 = (vectors + [None, None])[:2]
    rows = []
    for t in cfg.t:
        sc = cfg.sim(t)
        if kind == "semigroup":
            r = est_semigroup(m, x0, f, sc)
        elif kind == "gradient":
            r = est_gradient_W(m, x0, v1, f, sc)
        elif kind == "gradient-bismut":
            r = est_gradient_bismut(m, x0, v1, f, sc)
        elif kind == "gradient-parallel":
            r = est_gradient_parallel(m, x0, v1, f, sc)
        elif kind == "hessian":
            r = est_hessian(m, x0, v1, v2 if v2 is not None else v1, f, sc) if v1 is not None \
                else est_hessian(m, x0, None, None, f, sc)
        elif kind == "metric":
            r = est_tensor_semigroup(m, x0, MetricTensor(), sc)
        else:
            r = est_functional(m, x0, f, functional, sc)
        rows.append({"t": t, **r.to_json()})
        mean, se = np.atleast_1d(r.mean).reshape(-1), np.atleast_1d(r.stderr).reshape(-1)
        print(f"# {kind} t={t:g} paths={r.n_paths} steps={r.n_steps} f={f!r}", file=sys.stderr)
        for i, (a, b) in enumerate(zip(mean, se)):
            idx = np.unravel_index(i, np.shape(r.mean)) if np.ndim(r.mean) else ()
            print(f"{str(tuple(int(j) for j in idx)):>10}  {a: .10f}  {b:.3e}", file=sys.stderr)
    emit({"manifold": m.spec, "x0": x0.coords.tolist(), "estimator": kind, "results": rows}, cfg.out)
    return 0


def cmd_zoo():
    rows = []
    for name, spec_ in ZOO.items():
        m = parse_manifold(spec_)
        rows.append({"name": name, "spec": spec_, "dim": m.dim, "compact": m.compact,
                     "sectional_constant": m.sectional_constant, "closed_form": m.has_oracles})
    for r in rows:
        print(f"{r['name']:<10} {r['spec']:<32} dim={r['dim']} compact={r['compact']}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="geomflow", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON file with run options")
        sp.add_argument("--manifold", help="e.g. sphere:2:1, product:sphere:2:1,sphere:2:2")
        sp.add_argument("--suites", help="comma-separated suite ids or pointwise/integral/semigroup/all")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--paths", type=int)
        sp.add_argument("--steps", type=int)
        sp.add_argument("--t", help="time or comma-separated times")
        sp.add_argument("--grid", type=int, help="quadrature size")
        sp.add_argument("--tol", help="ID=value,... or a single value for all")
        sp.add_argument("--point", help="chart coordinates x1,x2[@chart label]")
        sp.add_argument("--f", help="test function: Y1, eigen or family:i")
        sp.add_argument("--rule", help="W2 kick rule: ito or stratonovich")
        sp.add_argument("--antithetic", action="store_true")
        sp.add_argument("--workers", type=int)
        sp.add_argument("--out", help="write the JSON report here instead of stdout")
        sp.add_argument("--csv", help="also write one CSV row per check")
        sp.add_argument("--deterministic", action="store_true", help="omit timings and timestamps")
        return sp

    common(sub.add_parser("verify", help="run identity suites and classify"))
    c = common(sub.add_parser("curvature", help="curvature at points"))
    c.add_argument("--points", nargs="*", help="several points (same syntax as --point)")
    s = common(sub.add_parser("simulate", help="simulate paths and summarise"))
    s.add_argument("--dump", help="binary trajectory dump path")
    s.add_argument("--w2", action="store_true", help="also track the doubled transport")
    e = common(sub.add_parser("estimate", help="run one estimator"))
    e.add_argument("kind", choices=ESTIMATORS)
    e.add_argument("--v", action="append", default=[], help="direction v1 (repeat for v2)")
    e.add_argument("--functional", default="gradsq",
                   choices=("f", "f2", "lap", "gradsq", "hess_op", "hess_op2", "hess_hs2"))
    sub.add_parser("zoo", help="list built-in manifolds")
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        if args.command == "zoo":
            return cmd_zoo()
        cfg = load_config(args)
        if args.command == "verify":
            return cmd_verify(cfg)
        if args.command == "curvature":
            pts = ([args.point] if args.point else []) + (args.points or [])
            return cmd_curvature(cfg, pts)
        if args.command == "simulate":
            return cmd_simulate(cfg, args.dump, args.w2)
        vecs = [np.array(_floats(v)) for v in args.v]
        return cmd_estimate(cfg, args.kind, vecs, args.functional)
    except (ConfigError, GeometryError, QuadratureError) as exc:
        print(f"geomflow: configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
