"""Experiment orchestration: scenario configs, canonical runs, sweeps.

Configs are JSON (versioned schema).  Each run writes into an append-only
directory named by the content hash of its config, containing the declared
outputs plus a manifest.json echoing the config, library versions, wall
time, an output index, and the pass/fail record of every embedded check.
Numerics are deterministic (fixed iteration orders), so rerunning a config
reproduces outputs byte-for-byte.
"""

import concurrent.futures
import hashlib
import json
import os
import time as _time

import numpy as np

from . import __version__
from . import diagnostics as dg
from . import discretization as dz
from . import evolver as ev
from . import ground_state as gs
from . import linearized_spectrum as ls
from . import series_builder as sb

SCHEMA_VERSION = 1

SCENARIOS = ("ground-state", "spectrum", "build-series",
             "evolve-near-solution", "classify-custom", "sweep")

DEFAULT_GRID = {"d": 6, "r_max": 60.0, "n": 6000}


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid config:\n" + "\n".join("  %s" % e for e in self.errors))


def _check_grid_cfg(g, errors, path="grid"):
    for key, typ in (("d", int), ("r_max", (int, float)), ("n", int)):
        if key not in g:
            errors.append("%s.%s: missing" % (path, key))
        elif not isinstance(g[key], typ) or isinstance(g[key], bool):
            errors.append("%s.%s: expected %s, got %r" % (path, key, typ, g[key]))
    if not errors:
        if g["d"] < 3:
            errors.append("%s.d: must be >= 3" % path)
        if g["r_max"] <= 0:
            errors.append("%s.r_max: must be positive" % path)
        if g["n"] < 16:
            errors.append("%s.n: must be >= 16" % path)


def validate_config(cfg):
    """Return a list of error strings with field paths (empty when valid)."""
    errors = []
    if not isinstance(cfg, dict):
        return ["config: expected a JSON object"]
    scen = cfg.get("scenario")
    if scen not in SCENARIOS:
        errors.append("scenario: expected one of %s, got %r" % (list(SCENARIOS), scen))
        return errors
    if scen != "sweep":
        g = cfg.get("grid", DEFAULT_GRID)
        if not isinstance(g, dict):
            errors.append("grid: expected an object")
        else:
            _check_grid_cfg(g, errors)
    if scen in ("build-series", "evolve-near-solution"):
        series = cfg.get("series", {})
        if not isinstance(series, dict):
            errors.append("series: expected an object")
        else:
            k = series.get("k", 3)
            if not isinstance(k, int) or k < 1:
                errors.append("series.k: expected integer >= 1, got %r" % (k,))
    if scen == "evolve-near-solution":
        sign = cfg.get("sign", -1)
        if sign not in (1, -1):
            errors.append("sign: expected +1 or -1, got %r" % (sign,))
    if scen == "classify-custom":
        init = cfg.get("initial")
        if not isinstance(init, dict) or "kind" not in init:
            errors.append("initial: expected an object with a 'kind' field")
        elif init["kind"] not in ("scaled-w", "field"):
            errors.append("initial.kind: expected 'scaled-w' or 'field', got %r"
                          % (init["kind"],))
        elif init["kind"] == "scaled-w" and "factor" not in init:
            errors.append("initial.factor: missing")
        elif init["kind"] == "field" and "path" not in init:
            errors.append("initial.path: missing")
    if scen == "sweep":
        ranges = cfg.get("ranges")
        if not isinstance(ranges, dict):
            errors.append("ranges: expected an object with parameter lists")
        else:
            for key in ("d", "n", "k", "a"):
                vals = ranges.get(key)
                if vals is not None and (not isinstance(vals, list) or not vals):
                    errors.append("ranges.%s: expected a nonempty list" % key)
    ecfg = cfg.get("evolver", {})
    if not isinstance(ecfg, dict):
        errors.append("evolver: expected an object")
    elif "dt" in ecfg and (not isinstance(ecfg["dt"], (int, float)) or ecfg["dt"] <= 0):
        errors.append("evolver.dt: expected positive number, got %r" % (ecfg["dt"],))
    return errors


def config_hash(cfg):
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


def _versions():
    import scipy
    return {"nlslab": __version__, "numpy": np.__version__, "scipy": scipy.__version__}


def _grid_from(cfg):
    g = dict(DEFAULT_GRID)
    g.update(cfg.get("grid", {}))
    return dz.build_grid(g["d"], g["r_max"], g["n"])


def _spectrum(grid):
    blocks = ls.build_blocks(grid)
    pair = ls.ground_mode(blocks)
    return blocks, pair


# ---------------------------------------------------------------------------
# scenario pipelines (each returns (outputs, checks); paths relative to run dir)

def _run_ground_state(cfg, rundir):
    grid = _grid_from(cfg)
    W = gs.sample_w(grid)
    refine = grid.n % 2 == 0
    kin = gs.kinetic_norm(W, grid, tail="powerlaw", refine=refine)
    en = gs.energy(W, grid, tail="powerlaw", refine=refine)
    quot = gs.sobolev_quotient(W, grid)
    gap = abs(en - kin ** 2 / grid.d) / en
    dz.save_field(os.path.join(rundir, "w.csv"), W.astype(complex), grid)
    dz.save_json(os.path.join(rundir, "ground_state.json"), {
        "kinetic_norm": kin, "energy": en, "sobolev_quotient": quot,
        "pohozaev_gap": gap,
        "tolerances": {"pohozaev_gap": 1e-6},
    })
    checks = {"pohozaev-identity": {"passed": gap <= 1e-6, "value": gap,
                                    "tolerance": 1e-6}}
    return ["w.csv", "ground_state.json"], checks


def _run_spectrum(cfg, rundir):
    grid = _grid_from(cfg)
    blocks, pair = _spectrum(grid)
    ls.save_eigenpair(os.path.join(rundir, "eigenpair"), pair, grid)
    checks = {
        "e0-positive": {"passed": pair.e0 > 0, "value": pair.e0},
        "block-residual": {"passed": pair.residual <= 1e-8,
                           "value": pair.residual, "tolerance": 1e-8},
    }
    return ["eigenpair.csv", "eigenpair.json"], checks


def _run_build_series(cfg, rundir):
    grid = _grid_from(cfg)
    series = cfg.get("series", {})
    k = series.get("k", 3)
    a = series.get("a", 1.0)
    blocks, pair = _spectrum(grid)
    near = sb.build_near_solution(k, a, pair, blocks)
    report = sb.residual_rate(near)
    sb.save_near_solution(os.path.join(rundir, "near_solution"), near, report)
    target = (k + 1) * pair.e0
    rel = abs(report.rate - target) / target
    checks = {"residual-rate": {"passed": rel <= 0.10, "value": report.rate,
                                "target": target, "relative_error": rel}}
    outputs = ["near_solution/manifest.json"]
    outputs += ["near_solution/profile_%d.csv" % j for j in range(1, k + 1)]
    return outputs, checks


def _run_wpm(cfg, rundir):
    grid = _grid_from(cfg)
    sign = cfg.get("sign", -1)
    series = cfg.get("series", {})
    k = series.get("k", 3)
    ecfg = cfg.get("evolver", {})
    dt = ecfg.get("dt", 0.01)
    seed_t0 = cfg.get("seed_t0", -10.5)
    eta = cfg.get("departure_floor", 1e-3)
    backward_span = cfg.get("backward_span", 120.0)

    blocks, pair = _spectrum(grid)
    ls.save_eigenpair(os.path.join(rundir, "eigenpair"), pair, grid)
    near = sb.build_near_solution(k, float(sign), pair, blocks)
    sb.save_near_solution(os.path.join(rundir, "near_solution"), near)
    W = gs.sample_w(grid)
    u0 = sb.assemble(near, seed_t0)

    # forward horizon: stop before the unstable mode amplifies floor-level
    # noise into departure; d0 e^{-e0 t} meets eta e^{+e0 t} at
    # (1/(2 e0)) ln(d0/eta), kept with a safety factor
    d0 = dz.h1_distance(u0, W.astype(complex), grid)
    t_fwd = 0.75 / (2 * pair.e0) * np.log(d0 / eta)

    lin = ecfg.get("linear_step", "cayley")
    fwd_cfg = ev.EvolverConfig(dt=dt, t_span=(seed_t0, seed_t0 + t_fwd),
                               sample_every=ecfg.get("sample_every", 0.5),
                               scheme=ecfg.get("scheme", "strang"),
                               linear_step=lin, track_modulation=True)
    trace_f = ev.evolve(u0, fwd_cfg, grid, lapl=blocks.lapl)
    trace_f.save(os.path.join(rundir, "trace_forward.csv"),
                 os.path.join(rundir, "trace_forward.json"))
    rep_f = dg.classify(trace_f, grid)

    bwd_cfg = ev.EvolverConfig(dt=dt, t_span=(seed_t0, seed_t0 - backward_span),
                               sample_every=ecfg.get("sample_every", 0.5),
                               scheme=ecfg.get("scheme", "strang"),
                               linear_step=lin, track_modulation=False)
    trace_b = ev.evolve(u0, bwd_cfg, grid, lapl=blocks.lapl)
    trace_b.save(os.path.join(rundir, "trace_backward.csv"),
                 os.path.join(rundir, "trace_backward.json"))
    rep_b = dg.classify(trace_b, grid)

    checks = {}
    rate = rep_f.rate.rate if rep_f.rate is not None else float("nan")
    checks["forward-converges-to-w"] = {
        "passed": rep_f.regime == "converges-to-W", "value": rep_f.regime}
    checks["forward-rate"] = {
        "passed": np.isfinite(rate) and abs(rate - pair.e0) / pair.e0 <= 0.15,
        "value": rate, "target": pair.e0}
    want_side = "below" if sign < 0 else "above"
    checks["kinetic-side"] = {
        "passed": rep_f.kinetic_side == want_side
                  and not rep_f.details["kinetic_violations"],
        "value": rep_f.kinetic_side}
    if sign < 0:
        checks["backward-scatters"] = {
            "passed": rep_b.regime == "scattering-proxy", "value": rep_b.regime}
    else:
        checks["backward-blowup"] = {
            "passed": rep_b.regime == "blowup", "value": rep_b.regime}
        if rep_b.regime == "blowup" and cfg.get("refine_blowup", True):
            t_star = trace_b.termination["t_star"]
            fine = ev.EvolverConfig(dt=dt / 2,
                                    t_span=(seed_t0, seed_t0 - backward_span),
                                    sample_every=ecfg.get("sample_every", 0.5),
                                    scheme=ecfg.get("scheme", "strang"),
                                    linear_step=lin, track_modulation=False)
            trace_b2 = ev.evolve(u0, fine, grid, lapl=blocks.lapl)
            t_star2 = trace_b2.termination.get("t_star", float("nan"))
            shift = abs(t_star2 - t_star) / abs(t_star - seed_t0)
            checks["blowup-time-stable"] = {
                "passed": np.isfinite(t_star2) and shift <= 0.05,
                "t_star": t_star, "t_star_refined": t_star2, "shift": shift}

    dz.save_json(os.path.join(rundir, "report.json"), {
        "e0": pair.e0, "sign": sign, "seed_t0": seed_t0,
        "forward_horizon": seed_t0 + t_fwd,
        "forward": rep_f.as_dict(), "backward": rep_b.as_dict(),
    })
    outputs = ["eigenpair.csv", "eigenpair.json", "trace_forward.csv",
               "trace_forward.json", "trace_backward.csv", "trace_backward.json",
               "report.json"]
    return outputs, checks


def _run_classify(cfg, rundir):
    grid = _grid_from(cfg)
    init = cfg["initial"]
    if init["kind"] == "scaled-w":
        u0 = init["factor"] * gs.sample_w(grid).astype(complex)
    else:
        u0, fgrid = dz.load_field(init["path"])
        if fgrid != grid:
            raise ConfigError(["initial.path: field grid %r does not match "
                               "config grid %r" % (fgrid, grid)])
    ecfg = cfg.get("evolver", {})
    config = ev.EvolverConfig(dt=ecfg.get("dt", 0.01),
                              t_span=tuple(ecfg.get("t_span", (0.0, 20.0))),
                              sample_every=ecfg.get("sample_every", 0.5),
                              scheme=ecfg.get("scheme", "strang"),
                              linear_step=ecfg.get("linear_step", "cayley"),
                              track_modulation=ecfg.get("track_modulation", True))
    trace = ev.evolve(u0, config, grid)
    trace.save(os.path.join(rundir, "trace.csv"), os.path.join(rundir, "trace.json"))
    report = dg.classify(trace, grid)
    dz.save_json(os.path.join(rundir, "report.json"), report.as_dict())
    checks = {"classified": {"passed": report.regime != "undetermined",
                             "value": report.regime}}
    return ["trace.csv", "trace.json", "report.json"], checks


def _run_sweep(cfg, rundir, workers=1):
    ranges = cfg.get("ranges", {})
    ds = ranges.get("d", [6])
    ns = ranges.get("n", [DEFAULT_GRID["n"]])
    ks = ranges.get("k", [3])
    aa = ranges.get("a", [1.0])
    r_max = cfg.get("grid", {}).get("r_max", DEFAULT_GRID["r_max"])

    # shared immutable precomputations per (d, n)
    spectra = {}
    for d in ds:
        for n in ns:
            grid = dz.build_grid(d, r_max, n)
            spectra[(d, n)] = (grid,) + _spectrum(grid)

    def cell(params):
        d, n, k, a = params
        grid, blocks, pair = spectra[(d, n)]
        near = sb.build_near_solution(k, a, pair, blocks)
        report = sb.residual_rate(near)
        return {"d": d, "n": n, "k": k, "a": a, "e0": pair.e0,
                "t_k": report.t_k, "rate": report.rate,
                "rate_target": (k + 1) * pair.e0}

    cells = [(d, n, k, a) for d in ds for n in ns for k in ks for a in aa]
    rows, failures = {}, {}
    with concurrent.futures.ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        futs = {pool.submit(cell, c): c for c in cells}
        for fut in concurrent.futures.as_completed(futs):
            c = futs[fut]
            try:
                rows[c] = fut.result()
            except Exception as exc:  # per-cell failures recorded, sweep continues
                failures[c] = "%s: %s" % (type(exc).__name__, exc)

    cols = ["d", "n", "k", "a", "e0", "t_k", "rate", "rate_target"]
    with open(os.path.join(rundir, "aggregate.csv"), "w") as f:
        f.write(",".join(cols) + "\n")
        for c in sorted(rows):  # deterministic order regardless of completion
            f.write(",".join("%.17g" % rows[c][col] if isinstance(rows[c][col], float)
                             else str(rows[c][col]) for col in cols) + "\n")
    if failures:
        dz.save_json(os.path.join(rundir, "failures.json"),
                     {str(k): v for k, v in failures.items()})
    checks = {"all-cells-completed": {"passed": not failures,
                                      "failed_cells": len(failures)}}
    return ["aggregate.csv"], checks


_PIPELINES = {
    "ground-state": _run_ground_state,
    "spectrum": _run_spectrum,
    "build-series": _run_build_series,
    "evolve-near-solution": _run_wpm,
    "classify-custom": _run_classify,
}


def run(cfg, out_dir=".", workers=1, check=False):
    """Execute a scenario config; returns the manifest dict.

    Raises ConfigError before creating any output when the config is invalid.
    """
    errors = validate_config(cfg)
    if errors:
        raise ConfigError(errors)
    scen = cfg["scenario"]
    rundir = os.path.join(out_dir, "%s-%s" % (scen, config_hash(cfg)))
    os.makedirs(rundir, exist_ok=True)
    t0 = _time.time()
    if scen == "sweep":
        outputs, checks = _run_sweep(cfg, rundir, workers=workers)
    else:
        outputs, checks = _PIPELINES[scen](cfg, rundir)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "config": cfg,
        "versions": _versions(),
        "wall_time_s": _time.time() - t0,
        "run_dir": rundir,
        "outputs": outputs,
        "checks": checks,
        "ok": all(c["passed"] for c in checks.values()) if checks else True,
    }
    dz.save_json(os.path.join(rundir, "manifest.json"), manifest)
    if check and not manifest["ok"]:
        failed = [name for name, c in checks.items() if not c["passed"]]
        raise RuntimeError("embedded checks failed: %s (see %s)"
                           % (", ".join(failed), rundir))
    return manifest


def canonical_wpm(d, sign, out_dir=".", **overrides):
    """The canonical threshold-solution experiment for the given sign.

    Builds spectrum -> series (k=3) -> seeds the near solution -> evolves
    forward (to the pre-departure horizon) and backward -> classifies both
    directions, checking the expected forward convergence, kinetic side, and
    backward scattering/blowup behavior.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1, got %r" % (sign,))
    cfg = {
        "scenario": "evolve-near-solution",
        "schema_version": SCHEMA_VERSION,
        "grid": {"d": d, "r_max": DEFAULT_GRID["r_max"], "n": DEFAULT_GRID["n"]},
        "sign": sign,
        "series": {"k": 3},
        "evolver": {"dt": 0.01, "sample_every": 0.5},
    }
    for key, val in overrides.items():
        if isinstance(val, dict) and isinstance(cfg.get(key), dict):
            cfg[key].update(val)
        else:
            cfg[key] = val
    return run(cfg, out_dir=out_dir)


def sweep(cfg, out_dir=".", workers=1):
    cfg = dict(cfg)
    cfg.setdefault("scenario", "sweep")
    cfg.setdefault("schema_version", SCHEMA_VERSION)
    return run(cfg, out_dir=out_dir, workers=workers)
