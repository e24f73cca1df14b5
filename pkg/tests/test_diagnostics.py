"""Modulation fitting, rate estimation, and trace classification."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nlslab import diagnostics as dg
from nlslab import discretization as dz
from nlslab import evolver as ev
from nlslab import ground_state as gs


def test_fit_modulation_recovers_exact_member(grid):
    u = gs.w_family(0.7, 1.3, grid)
    fit = dg.fit_modulation(u, grid)
    assert fit.theta == pytest.approx(0.7, abs=1e-8)
    assert fit.mu == pytest.approx(1.3, abs=1e-6)
    assert fit.distance < 1e-4


def test_fit_modulation_distance_of_perturbation(grid):
    bump = 0.01 * np.exp(-(grid.r - 8) ** 2)
    u = gs.w_family(0.0, 1.0, grid) + bump
    fit = dg.fit_modulation(u, grid)
    size = np.sqrt(dz.kinetic_sq(bump, grid))
    assert fit.distance == pytest.approx(size, rel=0.2)
    with pytest.raises(ValueError):
        dg.fit_modulation(np.zeros(grid.nnodes, complex), grid)


@settings(max_examples=15, deadline=None)
@given(st.floats(-1.4, 1.4), st.floats(0.6, 1.8))
def test_fit_modulation_recovers_random_members(theta, mu):
    g = dz.build_grid(6, 40.0, 400)
    fit = dg.fit_modulation(gs.w_family(theta, mu, g), g)
    assert fit.theta == pytest.approx(theta, abs=1e-6)
    assert fit.mu == pytest.approx(mu, abs=1e-4)


def test_rate_fit_exact_exponential():
    t = np.linspace(0.0, 20.0, 41)
    d = 3.0 * np.exp(-0.21 * t)
    fit = dg.rate_fit(t, d, floor=1e-12)
    assert fit.rate == pytest.approx(0.21, abs=1e-12)
    assert np.exp(fit.intercept) == pytest.approx(3.0, rel=1e-12)
    assert fit.residual < 1e-12
    assert fit.flags == []


def test_rate_fit_trims_floor_window():
    t = np.linspace(0.0, 40.0, 81)
    d = np.exp(-0.5 * t) + 1e-6  # floors out around t ~ 27
    fit = dg.rate_fit(t, d, floor=1e-6)
    assert fit.window[1] < 30.0
    assert fit.rate == pytest.approx(0.5, rel=0.05)


def test_rate_fit_flags_non_decaying():
    t = np.linspace(0.0, 10.0, 21)
    fit = dg.rate_fit(t, np.full_like(t, 0.3), floor=1e-9)
    assert "non-decaying" in fit.flags


def test_rate_fit_error_cases():
    t = np.linspace(0.0, 10.0, 21)
    with pytest.raises(ValueError):
        dg.rate_fit(t, np.full_like(t, 1e-12), floor=1.0)
    with pytest.raises(ValueError):
        dg.rate_fit(t[:3], np.exp(-t[:3]), floor=1e-9)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.05, 2.0), st.floats(-2.0, 2.0))
def test_rate_fit_recovers_random_rates(rate, logc):
    t = np.linspace(0.0, 8.0, 33)
    fit = dg.rate_fit(t, np.exp(logc - rate * t), floor=1e-15)
    assert fit.rate == pytest.approx(rate, rel=1e-9)


# ---------------------------------------------------------------------------
# trace-level diagnostics on synthetic traces

def _trace(grid, times, kinetic, energy=None, h1_dist=None, status="completed",
           horizon=np.inf):
    cfg = ev.EvolverConfig(dt=0.01, t_span=(times[0], times[-1]))
    tr = ev.EvolutionTrace(grid, cfg)
    tr.times = list(times)
    tr.kinetic = list(kinetic)
    tr.energy = list(energy if energy is not None else np.ones_like(times))
    tr.max_amp = [1.0] * len(times)
    tr.h1_dist = list(h1_dist if h1_dist is not None
                      else np.full(len(times), np.nan))
    tr.theta = [0.0] * len(times)
    tr.mu = [1.0] * len(times)
    tr.termination = {"status": status}
    tr.reflection = {"horizon_elapsed": horizon}
    return tr


def test_kinetic_dichotomy_sides(grid):
    kin_w = np.sqrt(dz.kinetic_sq(gs.sample_w(grid), grid))
    t = np.linspace(0, 5, 11)
    side, viol = dg.kinetic_dichotomy(_trace(grid, t, 0.9 * kin_w * np.ones(11)),
                                      grid)
    assert side == "below" and viol == []
    side, viol = dg.kinetic_dichotomy(_trace(grid, t, 1.1 * kin_w * np.ones(11)),
                                      grid)
    assert side == "above" and viol == []
    kin = 1.1 * kin_w * np.ones(11)
    kin[4] = 0.9 * kin_w
    side, viol = dg.kinetic_dichotomy(_trace(grid, t, kin), grid)
    assert side == "mixed" and viol == [t[4]]
    side, _ = dg.kinetic_dichotomy(_trace(grid, t, kin_w * np.ones(11)), grid)
    assert side == "at"


def test_classify_blowup(grid):
    t = np.linspace(0, 3, 7)
    tr = _trace(grid, t, np.ones(7), status="blowup-detected")
    rep = dg.classify(tr, grid)
    assert rep.regime == "blowup"
    assert rep.details["termination"]["status"] == "blowup-detected"


def test_classify_converges_to_w(grid):
    kin_w = np.sqrt(dz.kinetic_sq(gs.sample_w(grid), grid))
    t = np.linspace(0, 30, 61)
    dist = 2.0 * np.exp(-0.14 * t)
    # keep the proxy ratio away from the scattering threshold
    K = kin_w * np.ones_like(t)
    E = 0.2 * K ** 2
    tr = _trace(grid, t, 0.99 * K, energy=E, h1_dist=dist)
    rep = dg.classify(tr, grid)
    assert rep.regime == "converges-to-W"
    assert rep.rate.rate == pytest.approx(0.14, rel=0.05)


def test_classify_scattering_proxy(grid):
    t = np.linspace(0, 20, 41)
    K = np.ones_like(t)
    ratio = 0.6 * np.exp(-0.5 * t)  # crosses 0.05 around t ~ 5
    E = 0.5 * K ** 2 * (1 - ratio)
    tr = _trace(grid, t, K, energy=E, horizon=50.0)
    rep = dg.classify(tr, grid)
    assert rep.regime == "scattering-proxy"
    assert rep.details["proxy_reached_t"] < 6.0


def test_classify_respects_reflection_horizon(grid):
    t = np.linspace(0, 20, 41)
    K = np.ones_like(t)
    ratio = 0.6 * np.exp(-0.5 * t)
    E = 0.5 * K ** 2 * (1 - ratio)
    tr = _trace(grid, t, K, energy=E, horizon=2.0)
    rep = dg.classify(tr, grid)
    assert rep.regime == "undetermined"
    assert rep.details.get("proxy_after_horizon") is True


def test_classify_undetermined(grid):
    t = np.linspace(0, 10, 21)
    K = np.ones_like(t)
    E = 0.2 * K ** 2  # ratio fixed at 0.6, no distance data
    tr = _trace(grid, t, K, energy=E)
    rep = dg.classify(tr, grid)
    assert rep.regime == "undetermined"
    out = rep.as_dict()
    assert out["regime"] == "undetermined"
    assert "thresholds" in out
