"""Command-line experiment runner.

Every subcommand resolves its configuration from built-in defaults, an
optional ``--config`` JSON file and explicit flags (in that order), prints a
JSON report to stdout and, when an output directory is given (``--out`` or
``SMALLWORLD_OUT``), writes its artifacts there.  Errors are reported as
JSON on stdout with exit code 1.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, seeding
from .errors import InvalidConfig, SmallWorldError
from .topology import TorusSpec, euclidean_distance, sample_small_world

OUT_ENV = "SMALLWORLD_OUT"

DEFAULTS = {
    "common": {"out": None, "format": "json"},
    "torus": {"d": 1, "L": 16, "m": 1},
    "walk": {
        "beta": 0.3,
        "replicas": 1000,
        "seed": 0,
        "start": "distant",
        "x": None,
        "y": None,
        "annealed": None,
        "graph_seed": None,
        "horizon_mult": 50.0,
        "time": "continuous",
    },
}

SUBCOMMANDS = {
    "gen": {"torus": True, "walk": False, "extra": {"graph_seed": 0}},
    "meet": {"torus": True, "walk": True, "extra": {}},
    "hit": {"torus": True, "walk": True, "extra": {}},
    "coalesce": {"torus": True, "walk": True, "extra": {"n": 4, "t": "1.0"}},
    "green": {"torus": False, "walk": False, "extra": {"d": 1, "beta": 0.5, "dp_n0": None}},
    "betascan": {"torus": False, "walk": False, "extra": {"d": 3, "betas": "0.05,0.25,0.5,0.75,0.95"}},
    "iso": {"torus": True, "walk": False, "extra": {"samples": 20, "alpha": 0.1, "seed": 0, "beta": 0.3, "proxy": False}},
    "spectral": {"torus": True, "walk": False, "extra": {"beta": 0.3, "graph_seed": 0, "lazy": True, "t_grid": None}},
    "kingman": {"torus": False, "walk": False, "extra": {"n": 4, "t": "1.0"}},
}


def _floats(text) -> list[float]:
    if isinstance(text, (int, float)):
        return [float(text)]
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).split(",") if v.strip()]


def _site(text, d: int) -> tuple[int, ...]:
    if isinstance(text, (list, tuple)):
        vals = [int(v) for v in text]
    else:
        vals = [int(v) for v in str(text).replace(";", ",").split(",") if v.strip()]
    if len(vals) != d:
        raise InvalidConfig(f"site {text!r} does not have {d} coordinates")
    return tuple(vals)


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    low = str(text).lower()
    if low in ("1", "true", "yes"):
        return True
    if low in ("0", "false", "no"):
        return False
    raise InvalidConfig(f"not a boolean: {text!r}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="smallworld", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, layout in SUBCOMMANDS.items():
        s = sub.add_parser(name)
        s.add_argument("--config", default=None, help="JSON file with option values")
        s.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV})")
        s.add_argument("--format", choices=("json", "csv"), default=None, help="what to print on stdout")
        if layout["torus"]:
            s.add_argument("--d", type=int, default=None)
            s.add_argument("--L", type=int, default=None)
            s.add_argument("--m", type=int, default=None)
        if layout["walk"]:
            s.add_argument("--beta", type=float, default=None)
            s.add_argument("--replicas", type=int, default=None)
            s.add_argument("--seed", type=int, default=None)
            s.add_argument(
                "--start",
                choices=("distant", "antipodal", "origin", "uniform", "explicit"),
                default=None,
            )
            s.add_argument("--x", default=None, help="explicit start, e.g. '3' or '1,2'")
            s.add_argument("--y", default=None, help="explicit second start (meet)")
            g = s.add_mutually_exclusive_group()
            g.add_argument("--annealed", action="store_const", const=True, default=None)
            g.add_argument("--graph-seed", dest="graph_seed", type=int, default=None)
            s.add_argument("--horizon-mult", dest="horizon_mult", type=float, default=None)
            s.add_argument("--time", choices=("continuous", "discrete"), default=None)
        for key, val in layout["extra"].items():
            if layout["walk"] and key in DEFAULTS["walk"]:
                continue
            flag = "--" + key.replace("_", "-")
            if isinstance(val, bool):
                s.add_argument(flag, dest=key, choices=("true", "false"), default=None)
            elif key in ("d", "n", "samples", "dp_n0", "graph_seed", "seed"):
                s.add_argument(flag, dest=key, type=int, default=None)
            elif key in ("beta", "alpha"):
                s.add_argument(flag, dest=key, type=float, default=None)
            else:
                s.add_argument(flag, dest=key, default=None)
    return p


def resolve_config(args: argparse.Namespace) -> dict:
    layout = SUBCOMMANDS[args.command]
    cfg = dict(DEFAULTS["common"])
    if layout["torus"]:
        cfg.update(DEFAULTS["torus"])
    if layout["walk"]:
        cfg.update(DEFAULTS["walk"])
    cfg.update(layout["extra"])
    if args.config:
        with open(args.config, encoding="ascii") as fh:
            loaded = json.load(fh)
        unknown = set(loaded) - set(cfg) - {"command"}
        if unknown:
            raise InvalidConfig(f"unknown config keys: {sorted(unknown)}")
        if loaded.get("command", args.command) != args.command:
            raise InvalidConfig(f"config is for {loaded['command']!r}, not {args.command!r}")
        cfg.update({k: v for k, v in loaded.items() if k != "command"})
    for key, val in vars(args).items():
        if key in cfg and val is not None:
            cfg[key] = val
    if cfg["out"] is None:
        cfg["out"] = os.environ.get(OUT_ENV)
    cfg["command"] = args.command
    validate(cfg)
    return cfg


def validate(cfg: dict) -> None:
    def need(cond, msg):
        if not cond:
            raise InvalidConfig(msg)

    if "L" in cfg:
        need(cfg["d"] >= 1 and cfg["L"] >= 1 and cfg["m"] >= 1, "d, L and m must be positive")
    if "d" in cfg:
        need(cfg["d"] >= 1, "d must be positive")
    if "beta" in cfg:
        lo_ok = cfg["beta"] > 0.0 if cfg["command"] == "green" else cfg["beta"] >= 0.0
        need(lo_ok and cfg["beta"] < 1.0, f"beta out of range: {cfg['beta']}")
    if "replicas" in cfg:
        need(cfg["replicas"] >= 1, "replicas must be positive")
        need(cfg["horizon_mult"] > 0, "horizon multiplier must be positive")
        if cfg["annealed"] and cfg["graph_seed"] is not None:
            raise InvalidConfig("annealed and quenched (graph_seed) are mutually exclusive")
        if cfg["start"] == "explicit":
            need(cfg["x"] is not None, "explicit start needs --x")
    if "samples" in cfg:
        need(cfg["samples"] >= 1, "samples must be positive")
    if cfg["command"] in ("coalesce", "kingman"):
        need(cfg["n"] >= 1, "n must be positive")
        need(all(t >= 0 for t in _floats(cfg["t"])), "t must be nonnegative")


# subcommand bodies return (report dict, csv text or None) ------------------


def _spec(cfg) -> TorusSpec:
    return TorusSpec(cfg["d"], cfg["L"], cfg["m"])


def _kernel(cfg, spec, lazy=False):
    from .walk import WalkKernel

    return WalkKernel.simple(spec, cfg["beta"], lazy=lazy)


def _green_even(d: int, beta: float):
    from .green import solve_bigworld_green

    if d == 2 or beta <= 0.0:
        return None
    return solve_bigworld_green(d, beta)


def _starts(cfg, spec, two: bool):
    from .walk import distant_site, separation_threshold

    n = cfg["replicas"]
    mode = cfg["start"]
    if mode in ("distant", "antipodal"):
        far = distant_site(spec)
        if euclidean_distance(spec, far, (0,) * spec.d) < separation_threshold(spec.L):
            raise InvalidConfig("torus too small for a distant start")
        xs = np.full(n, spec.encode(far))
        ys = np.zeros(n, dtype=np.int64)
    elif mode == "origin":
        xs = np.zeros(n, dtype=np.int64)
        ys = np.zeros(n, dtype=np.int64)
    elif mode == "uniform":
        seeds = seeding.replica_seeds(cfg["seed"], n, seeding.START)
        pairs = np.array([np.random.default_rng(int(s)).integers(spec.n_sites, size=2) for s in seeds])
        xs, ys = pairs[:, 0], pairs[:, 1]
    else:
        xs = np.full(n, spec.encode(_site(cfg["x"], spec.d)))
        y = (0,) * spec.d if cfg["y"] is None else _site(cfg["y"], spec.d)
        ys = np.full(n, spec.encode(y))
    return xs, (ys if two else None)


def _walk_law(cfg, spec, hitting: bool):
    from .stats import limit_law_hitting, limit_law_meeting

    if spec.m != 1 or cfg["start"] not in ("distant", "antipodal", "origin"):
        return None, None
    if cfg["start"] == "origin" and hitting:
        return None, None
    g = _green_even(spec.d, cfg["beta"])
    if g is None:
        return None, None
    distant = cfg["start"] != "origin"
    law = limit_law_hitting(g, distant=distant) if hitting else limit_law_meeting(g, distant=distant)
    return law, g


def cmd_gen(cfg):
    spec = _spec(cfg)
    S = sample_small_world(spec, cfg["graph_seed"])
    return {"graph": S.to_dict()}, None


def _cmd_walk(cfg, hitting: bool):
    from .stats import EmpiricalDistribution, dkw_epsilon, ks_distance
    from .walk import TimeModel, horizon_default, run_walk_experiment

    spec = _spec(cfg)
    kernel = _kernel(cfg, spec)
    xs, ys = _starts(cfg, spec, two=not hitting)
    quenched = cfg["graph_seed"] is not None
    batch = run_walk_experiment(
        "hit" if hitting else "meet",
        spec,
        kernel,
        xs,
        ys,
        cfg["replicas"],
        cfg["seed"],
        time_model=TimeModel(cfg["time"]),
        graph_seed=cfg["graph_seed"] if quenched else None,
        horizon=horizon_default(spec, cfg["horizon_mult"]),
    )
    emp = EmpiricalDistribution.from_samples(batch.rescaled, batch.censored)
    n = emp.N
    report = {
        "N": n,
        "mean_raw": float(np.mean(batch.raw)),
        "stderr_raw": float(np.std(batch.raw, ddof=1) / math.sqrt(n)) if n > 1 else None,
        "mean_rescaled": float(np.mean(batch.rescaled)),
        "censored_fraction": batch.censored_fraction,
        "quenched": quenched,
        "dkw_eps": dkw_epsilon(n, 0.01),
        "law": None,
        "ks": None,
    }
    law, g = _walk_law(cfg, spec, hitting)
    if law is not None and cfg["time"] == "continuous":
        report["law"] = law.to_dict()
        report["ks"] = ks_distance(emp, law, check=False)
        report["green_source"] = g.methods["G_bigworld"]
    return report, batch.to_csv()


def cmd_meet(cfg):
    return _cmd_walk(cfg, hitting=False)


def cmd_hit(cfg):
    return _cmd_walk(cfg, hitting=True)


def cmd_coalesce(cfg):
    from .coalesce import ExperimentPlan, coalescence_summary, sample_coalescing, spread_sites
    from .walk import horizon_default

    spec = _spec(cfg)
    kernel = _kernel(cfg, spec)
    g = _green_even(spec.d, cfg["beta"]) if spec.m == 1 else None
    G_even = g.G_bigworld_even if g is not None else 1.0
    source = g.methods["G_bigworld"] if g is not None else "none (s_L uses G^ev = 1)"
    plan = ExperimentPlan.build(spec, cfg["n"], G_even, t_grid=_floats(cfg["t"]), green_source=source)
    if cfg["start"] == "explicit":
        sites = [_site(s, spec.d) for s in str(cfg["x"]).split(";")]
    else:
        sites = spread_sites(spec, cfg["n"], plan.h_L)
    horizon = max(horizon_default(spec, cfg["horizon_mult"]), plan.s_L * max(plan.t_grid))
    batch = sample_coalescing(
        None if cfg["graph_seed"] is None else sample_small_world(spec, cfg["graph_seed"]),
        kernel,
        sites,
        plan,
        cfg["seed"],
        replicas=cfg["replicas"],
        spec=spec,
        graph_seed=cfg["graph_seed"],
        horizon=horizon,
        time_model=cfg["time"],
    )
    report = coalescence_summary(plan, batch)
    report["sites"] = [list(s) for s in sites]
    report["censored_fraction"] = float(batch.censored.mean())
    return report, batch.to_csv()


def cmd_green(cfg):
    from .green import solve_bigworld_green

    rep = solve_bigworld_green(cfg["d"], cfg["beta"], dp_n0=cfg["dp_n0"])
    return rep.to_dict(), None


def cmd_betascan(cfg):
    from .green import beta_comparison_scan

    scan = beta_comparison_scan(cfg["d"], _floats(cfg["betas"]))
    report = {
        "d": scan.d,
        "crossing": scan.crossing,
        "bracket": list(scan.bracket) if scan.bracket else None,
        "sign_ok": scan.sign_ok,
        "rows": [list(r) for r in scan.rows],
    }
    return report, scan.to_csv()


def cmd_iso(cfg):
    from .spectral import iso_survey

    res = iso_survey(_spec(cfg), cfg["samples"], cfg["alpha"], cfg["seed"], beta=cfg["beta"], proxy=_bool(cfg["proxy"]))
    return {"alpha": res.alpha, "fraction": res.fraction, "proxy": res.proxy, "samples": len(res.rows)}, res.to_csv()


def cmd_spectral(cfg):
    from .spectral import spectral_report

    spec = _spec(cfg)
    S = sample_small_world(spec, cfg["graph_seed"])
    kernel = _kernel(cfg, spec, lazy=_bool(cfg["lazy"]))
    grid = _floats(cfg["t_grid"]) if cfg["t_grid"] is not None else None
    rep = spectral_report(S, kernel, grid)
    return rep.to_dict(), None


def cmd_kingman(cfg):
    from .coalesce import kingman_row

    n = cfg["n"]
    rows = []
    for t in _floats(cfg["t"]):
        q = kingman_row(n, t)
        rows.extend({"t": t, "k": k, "q": float(q[k - 1])} for k in range(1, n + 1))
    csv = "t,k,q\n" + "".join(f"{r['t']!r},{r['k']},{r['q']!r}\n" for r in rows)
    return {"n": n, "table": rows}, csv


COMMANDS = {
    "gen": cmd_gen,
    "meet": cmd_meet,
    "hit": cmd_hit,
    "coalesce": cmd_coalesce,
    "green": cmd_green,
    "betascan": cmd_betascan,
    "iso": cmd_iso,
    "spectral": cmd_spectral,
    "kingman": cmd_kingman,
}


def _dump(obj) -> str:
    def clean(v):
        if isinstance(v, float) and not math.isfinite(v):
            return None
        if isinstance(v, dict):
            return {k: clean(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [clean(x) for x in v]
        if isinstance(v, np.generic):
            return clean(v.item())
        return v

    return json.dumps(clean(obj), sort_keys=True, indent=2, ensure_ascii=True) + "\n"


def run(cfg: dict) -> tuple[str, str | None]:
    report, csv = COMMANDS[cfg["command"]](cfg)
    echo = {k: v for k, v in cfg.items() if k not in ("out", "format")}
    doc = {"command": cfg["command"], "version": __version__, "config": echo, "result": report}
    return _dump(doc), csv


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        text, csv = run(cfg)
    except (SmallWorldError, OSError, ValueError) as exc:
        code = getattr(exc, "code", type(exc).__name__)
        sys.stdout.write(_dump({"error": code, "message": str(exc), "command": args.command}))
        return 1
    if cfg["out"]:
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{cfg['command']}.json").write_text(text, encoding="ascii", newline="\n")
        if csv is not None:
            (out / f"{cfg['command']}.csv").write_text(csv, encoding="ascii", newline="\n")
    if cfg["format"] == "csv" and csv is not None:
        sys.stdout.write(csv)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
