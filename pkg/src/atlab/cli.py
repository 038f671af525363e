"""Batch command line: ``atlab <command> [options]``.

Options come from three layers, later ones winning: built-in defaults, a YAML
file given with ``--config``, then explicit flags.  Every run writes
``<command>.csv`` and ``<command>.json`` into ``--out`` and, unless
``--no-plots`` is set, SVG figures next to them.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
import time

import numpy as np
import yaml

from . import curves, oracle, report, samplers, suite, vertex
from .lattice import BoxRegion, DualGeometry, Region, block
from .limits import CapExceeded
from .spins import Boundary
from .weights import Couplings, eight_vertex_weights, regime_predicates

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY, EXIT_CAP = 0, 2, 3, 4

COMMON = {"out": "atlab-out", "seed": 0, "timing": False, "plots": True}
CHAIN = {"chains": 4, "sweeps": 10_000, "burn_in": 1_000, "thin": 10, "init": "random"}
DEFAULTS = {
    "verify": {"region": "d2n1", "points": 20, "contour_k": 10},
    "enumerate": {"kind": "gat", "region": "block2x2", "J": 0.4, "Jp": 0.3, "U": 0.1,
                  "boundary": "+,f", "a": 1.0, "b": 1.0, "c": 1.0},
    "sample": {"d": 2, "n": 4, "J": 0.4, "Jp": 0.3, "U": 0.1, "boundary": "+,f",
               "observables": "tau0,staggered,edge_density", **CHAIN},
    "scan-curve": {"family": "gamma", "kappa": 0.25, "kappa_p": 0.5, "betas": "0.05:0.95:10",
                   "ks": "1", "ts": "0.5,1,2,4", "n": 1, "backend": "oracle", **CHAIN},
    "phase-map": {"d": 2, "n": 16, "J": "0.05", "U": "-4", "Jp": None, "boundary": "+,alt",
                  "backend": "mcmc", **CHAIN, "init": "boundary"},
    "height-var": {"a_over_c": 0.05, "b_over_c": 20.0, "ns": "1,8", "backend": "mcmc",
                   **CHAIN, "init": "boundary"},
}


class ConfigError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


# -------------------------------------------------------------- parsing

def parse_grid(text) -> list:
    """"a,b,c", "start:stop:count" or empty; numbers pass through."""
    if text is None:
        return []
    if isinstance(text, (int, float)):
        return [float(text)]
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    text = str(text).strip()
    if not text:
        return []
    try:
        if ":" in text:
            lo, hi, count = text.split(":")
            return [float(x) for x in np.linspace(float(lo), float(hi), int(count))]
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad grid {text!r}") from exc


def parse_region(spec: str) -> Region:
    spec = str(spec).strip().lower()
    if spec == "point":
        return Region([(0, 0)])
    if spec == "domino":
        return block(1, 2)
    m = re.fullmatch(r"d(\d+)n(\d+)", spec)
    if m:
        return BoxRegion(int(m.group(1)), int(m.group(2)))
    m = re.fullmatch(r"block(\d+(?:x\d+)*)", spec)
    if m:
        return block(*(int(x) for x in m.group(1).split("x")))
    raise ConfigError(f"unknown region {spec!r}; use point, domino, blockAxB or dDnN")


def parse_boundary(text: str) -> tuple:
    parts = [p for p in str(text).split(",")]
    if len(parts) != 2:
        raise ConfigError(f"boundary needs two comma-separated layers, got {text!r}")
    try:
        return Boundary.parse(parts[0]), Boundary.parse(parts[1])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="atlab", description="Exact and Monte Carlo experiments on coupled Ising layers.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    S = argparse.SUPPRESS
    for name in DEFAULTS:
        sp = sub.add_parser(name, argument_default=S)
        sp.add_argument("--config")
        sp.add_argument("--out")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--workers", type=int)
        sp.add_argument("--timing", action="store_true", help="record wall time in the JSON")
        sp.add_argument("--no-plots", dest="plots", action="store_false")
        for key, val in DEFAULTS[name].items():
            flag = "--" + key.replace("_", "-")
            kind = type(val) if isinstance(val, (int, float)) and not isinstance(val, bool) else str
            sp.add_argument(flag, dest=key, type=kind)
    return p


_NEGATIVE = re.compile(r"-\.?\d")


def _attach_negative_values(argv):
    """Rewrite ``--flag -4,-2`` as ``--flag=-4,-2``; argparse only accepts
    bare negative numbers as option values."""
    out = []
    for tok in argv:
        if out and _NEGATIVE.match(tok) and out[-1].startswith("--") and "=" not in out[-1]:
            out[-1] = f"{out[-1]}={tok}"
        else:
            out.append(tok)
    return out


def resolve(argv) -> dict:
    ns = build_parser().parse_args(_attach_negative_values(list(argv)))
    if ns.command is None:
        raise ConfigError("missing command; one of " + ", ".join(DEFAULTS))
    flags = vars(ns)
    cfg = dict(COMMON)
    cfg.update(DEFAULTS[ns.command])
    path = flags.pop("config", None)
    if path:
        try:
            with open(path) as f:
                loaded = yaml.safe_load(f) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a mapping")
        loaded = {k.replace("-", "_"): v for k, v in loaded.items()}
        unknown = set(loaded) - set(cfg) - {"workers", "command"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(loaded)
    cfg.update(flags)
    cfg["command"] = ns.command
    return cfg


def _chain_kw(cfg):
    return {"chains": int(cfg["chains"]), "sweeps": int(cfg["sweeps"]),
            "burn_in": int(cfg["burn_in"]), "thin": int(cfg["thin"]), "seed": int(cfg["seed"]),
            "init": cfg["init"], "workers": cfg.get("workers")}


def _couplings(cfg):
    return Couplings.at(float(cfg["J"]), float(cfg["Jp"]), float(cfg["U"]))


# ------------------------------------------------------------- commands

def cmd_verify(cfg):
    region = parse_region(cfg["region"])
    rows = suite.run_suite(region, int(cfg["points"]), int(cfg["seed"]), int(cfg["contour_k"]))
    csv_rows = [{"check": r["check"], "metric": r["metric"], "threshold": r["threshold"],
                 "passed": r["passed"], "observable": r["check"], "value": r["value"],
                 "stderr": None, "backend": "exact"} for r in rows]
    failed = [r["check"] for r in rows if not r["passed"]]
    return {"params": ["check", "metric", "threshold", "passed"], "rows": csv_rows,
            "results": rows, "exit": EXIT_VERIFY if failed else EXIT_OK,
            "summary": {"passed": not failed, "failed": failed,
                        "enumeration_region": suite.enumeration_region(region).n_interior}}


def _state_text(row):
    return " ".join(str(int(v)) for v in np.ravel(row))


def cmd_enumerate(cfg):
    kind = cfg["kind"]
    region = parse_region(cfg["region"])
    bs, bt = parse_boundary(cfg["boundary"])
    info = {}
    if kind == "at":
        c = _couplings(cfg)
        mu = oracle.at_law(region, c, bs, bt)
        S, T = mu.meta["S"], mu.meta["T"]
        labels = [_state_text(S[i // len(T)]) + " | " + _state_text(T[i % len(T)])
                  for i in range(len(mu.states))]
    elif kind == "gat":
        c = _couplings(cfg)
        if bs.kind not in ("plus", "free"):
            raise ConfigError("graphical law needs a + or free first layer")
        mu = oracle.gat_law(region, c, int(bs.is_plus), bt)
        labels = [format(int(s), f"0{region.n_edges}b")[::-1] for s in mu.states]
    elif kind == "eightv":
        c = _couplings(cfg)
        mu = vertex.eightv_law(DualGeometry(region), eight_vertex_weights(c), bt)
        dots, circs = mu.meta["sigma_dot"], mu.meta["sigma_circ"]
        labels = [_state_text(dots[i // len(circs)]) + " | " + _state_text(circs[i % len(circs)])
                  for i in range(len(mu.states))]
    elif kind == "hf":
        mu = vertex.hf_law(region, float(cfg["a"]), float(cfg["b"]), float(cfg["c"]))
        labels = [_state_text(p) + " | " + _state_text(d) for p, d in zip(mu.meta["hp"], mu.meta["hd"])]
    else:
        raise ConfigError(f"unknown enumeration kind {kind!r}; use at, gat, eightv or hf")
    if kind != "hf":
        info["regime"] = regime_predicates(_couplings(cfg))
    probs = mu.probs
    rows = [{"state": lab, "observable": "probability", "value": float(p), "stderr": None,
             "backend": "exact"} for lab, p in zip(labels, probs)]
    info.update(kind=kind, log_partition=mu.logZ, n_states=len(mu.states))
    return {"params": ["state"], "rows": rows, "results": [info], "exit": EXIT_OK}


def cmd_sample(cfg):
    region = BoxRegion(int(cfg["d"]), int(cfg["n"]))
    bs, bt = parse_boundary(cfg["boundary"])
    c = _couplings(cfg)
    obs = [o.strip() for o in str(cfg["observables"]).split(",") if o.strip()]
    res = samplers.run_chains(region, c, bs, bt, observables=obs, **_chain_kw(cfg))
    rows = [{"J": c.K, "Jp": c.Kp, "U": c.Kpp, "observable": name, "value": s.mean,
             "stderr": s.stderr, "backend": "mc"} for name, s in res.series.items()]
    return {"params": ["J", "Jp", "U"], "rows": rows, "exit": EXIT_OK,
            "results": [{"regime": regime_predicates(c), "n_samples": {k: s.n_samples for k, s in res.series.items()}}]}


def cmd_scan_curve(cfg):
    family = cfg["family"]
    backend = "exact" if cfg["backend"] == "oracle" else "mc"
    chain = _chain_kw(cfg) if backend == "mc" else {}
    seed = chain.pop("seed", int(cfg["seed"]))
    plots = []
    if family == "gamma":
        betas = parse_grid(cfg["betas"])
        ks = [int(k) for k in parse_grid(cfg["ks"])]
        if not betas or not ks:
            return {"params": ["k", "beta"], "rows": [], "results": [], "exit": EXIT_OK}
        out = curves.theta_scan(float(cfg["kappa"]), float(cfg["kappa_p"]), betas, ks,
                                backend=cfg["backend"], seed=seed, **chain)
        rows = [{"k": r["k"], "beta": r["beta"], "observable": "theta", "value": r["theta"],
                 "stderr": r["stderr"] if backend == "mc" else None, "backend": backend}
                for r in out["theta"]]
        series = {f"θ_{k}": ([r["beta"] for r in out["theta"] if r["k"] == k],
                             [r["theta"] for r in out["theta"] if r["k"] == k],
                             [r["stderr"] for r in out["theta"] if r["k"] == k]) for k in ks}
        plots.append(("line", "scan-curve.svg", series, "threshold probability", "β", "θ"))
        return {"params": ["k", "beta"], "rows": rows, "exit": EXIT_OK,
                "results": [{"S": out["S"], "crossings": out["crossings"]}], "plots": plots}
    if family == "hat_gamma":
        ts = parse_grid(cfg["ts"])
        out = curves.edge_density_scan(float(cfg["kappa"]), ts, int(cfg["n"]), backend=cfg["backend"],
                                       seed=seed, **chain) if ts else []
        rows = []
        for r in out:
            for name in ("first", "second", "sum"):
                rows.append({"t": r["t"], "observable": f"edge_density_{name}", "value": r[name],
                             "stderr": r[f"{name}_stderr"] if backend == "mc" else None,
                             "backend": backend})
        series = {name: ([r["t"] for r in out], [r[name] for r in out],
                         [r[f"{name}_stderr"] for r in out]) for name in ("first", "second", "sum")}
        plots.append(("line", "scan-curve.svg", series, "edge densities", "t", "density"))
        return {"params": ["t"], "rows": rows, "results": out, "exit": EXIT_OK, "plots": plots}
    raise ConfigError(f"unknown curve family {family!r}; use gamma or hat_gamma")


def _phase_point(region, c, bs, bt, cfg):
    if cfg["backend"] == "oracle":
        pe = oracle.PairEnumeration(region, c, bs, bt)
        origin = int(region.index[(0,) * region.d])
        return {"staggered": (pe.staggered_order(), None), "abs_tau0": (abs(pe.magnetisation(origin, 0)), None)}
    res = samplers.run_chains(region, c, bs, bt, observables=("staggered", "tau0"), **_chain_kw(cfg))
    st, tau = res.series["staggered"], res.series["tau0"]
    return {"staggered": (st.mean, st.stderr), "abs_tau0": (abs(tau.mean), tau.stderr)}


def cmd_phase_map(cfg):
    region = BoxRegion(int(cfg["d"]), int(cfg["n"]))
    bs, bt = parse_boundary(cfg["boundary"])
    Js, Us = parse_grid(cfg["J"]), parse_grid(cfg["U"])
    Jps = parse_grid(cfg["Jp"]) if cfg.get("Jp") not in (None, "") else None
    backend = "exact" if cfg["backend"] == "oracle" else "mc"
    rows, grids = [], {"staggered": np.full((len(Us), len(Js)), np.nan),
                       "abs_tau0": np.full((len(Us), len(Js)), np.nan)}
    for i, U in enumerate(Us):
        for j, J in enumerate(Js):
            Jp = J if Jps is None else Jps[0]
            c = Couplings.at(J, Jp, U)
            out = _phase_point(region, c, bs, bt, cfg)
            for name, (val, err) in out.items():
                grids[name][i, j] = val
                rows.append({"J": J, "Jp": Jp, "U": U, "observable": name, "value": val,
                             "stderr": err, "backend": backend})
    plots = [("heatmap", f"phase-map-{name}.svg", (Js, Us, grid), name, "J", "U") for name, grid in grids.items()]
    return {"params": ["J", "Jp", "U"], "rows": rows, "results": rows, "exit": EXIT_OK,
            "plots": plots if Js and Us else []}


def cmd_height_var(cfg):
    ns = [int(n) for n in parse_grid(cfg["ns"])]
    a, b = float(cfg["a_over_c"]), float(cfg["b_over_c"])
    backend = "exact" if cfg["backend"] == "oracle" else "mc"
    rows = []
    for n in ns:
        if backend == "exact":
            val, err = vertex.height_variance(n, a, b, 1.0, "oracle")
            err = None
        else:
            val, err = samplers.height_variance_mc(BoxRegion(2, n), a, b, **_chain_kw(cfg))
        rows.append({"n": n, "observable": "height_var", "value": val, "stderr": err, "backend": backend})
    series = {"Var h_0": ([r["n"] for r in rows], [r["value"] for r in rows],
                          [r["stderr"] or 0.0 for r in rows])}
    return {"params": ["n"], "rows": rows, "results": rows, "exit": EXIT_OK,
            "plots": [("line", "height-var.svg", series, "height variance", "n", "Var(h_0)")] if rows else []}


COMMANDS = {"verify": cmd_verify, "enumerate": cmd_enumerate, "sample": cmd_sample,
            "scan-curve": cmd_scan_curve, "phase-map": cmd_phase_map, "height-var": cmd_height_var}


# ----------------------------------------------------------------- main

def _emit(cfg, out, elapsed):
    os.makedirs(cfg["out"], exist_ok=True)
    name = cfg["command"]
    seed = int(cfg["seed"])
    rows = [dict(r, seed=seed) for r in out["rows"]]
    report.write_csv(os.path.join(cfg["out"], f"{name}.csv"), rows, out["params"])
    public = {k: v for k, v in cfg.items() if k not in ("out", "workers", "timing", "plots")}
    doc = report.results_document(public, out["results"], seed, elapsed if cfg["timing"] else None)
    if "summary" in out:
        doc["summary"] = report._clean(out["summary"])
    report.write_json(os.path.join(cfg["out"], f"{name}.json"), doc)
    if cfg["plots"]:
        for kind, fname, data, title, xl, yl in out.get("plots", []):
            path = os.path.join(cfg["out"], fname)
            if kind == "line":
                report.line_svg(path, data, title=title, xlabel=xl, ylabel=yl)
            else:
                xs, ys, grid = data
                report.heatmap_svg(path, xs, ys, grid, title=title, xlabel=xl, ylabel=yl, label=title)


def _fail(code, exc):
    json.dump({"error": type(exc).__name__, "message": str(exc), "exit_code": code}, sys.stderr)
    sys.stderr.write("\n")
    return code


def main(argv=None) -> int:
    try:
        cfg = resolve(sys.argv[1:] if argv is None else argv)
        t0 = time.perf_counter()
        out = COMMANDS[cfg["command"]](cfg)
        _emit(cfg, out, time.perf_counter() - t0)
    except CapExceeded as exc:
        return _fail(EXIT_CAP, exc)
    except ValueError as exc:
        return _fail(EXIT_CONFIG, exc)
    if out["exit"] == EXIT_VERIFY:
        failed = out.get("summary", {}).get("failed", [])
        json.dump({"error": "VerificationFailed", "message": "failed checks: " + ", ".join(failed),
                   "exit_code": EXIT_VERIFY}, sys.stderr)
        sys.stderr.write("\n")
    return out["exit"]


if __name__ == "__main__":
    sys.exit(main())
