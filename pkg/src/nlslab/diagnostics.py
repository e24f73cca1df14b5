"""Modulation fitting, rate estimation, kinetic dichotomy, classification.

The modulation fit projects a field onto the two-parameter family
W_{[theta,mu]}: for each scale mu the optimal phase has the closed form
theta = arg <grad W_mu, grad u>, leaving a 1-D bounded minimization in mu.
The distance is always evaluated as the kinetic norm of the direct field
difference u - e^{i theta} W_mu (the expanded norm-difference formula cancels
catastrophically near the family and floors around 1e-3).

Classification mirrors the forward/backward trichotomy: blowup if the
detector fired; convergence to the modulated W family if the fitted distance
decays to a small value at a positive rate; scattering proxy if the
potential-to-kinetic energy ratio drops below a threshold before the
reflection horizon; undetermined otherwise (a valid outcome).
"""

import numpy as np
from scipy.optimize import minimize_scalar

from . import discretization as dz
from . import ground_state as gs


class ModulationFit:
    def __init__(self, theta, mu, distance, diagnostics=None):
        self.theta = float(theta)
        self.mu = float(mu)
        self.distance = float(distance)
        self.diagnostics = diagnostics or {}


def fit_modulation(u, grid, mu_bounds=None):
    """Minimize ||u - W_{[theta,mu]}||_{H1-dot} over (theta, mu).

    theta is eliminated in closed form per mu; mu by bounded scalar
    minimization on a bracket seeded from amplitude matching
    (max W_mu = mu^{-(d-2)/2}).
    """
    u = np.asarray(u, dtype=complex)
    if not np.any(u):
        raise ValueError("cannot fit modulation of the zero field")
    d = grid.d

    def dist2_theta(mu):
        Wm = gs.w_family(0.0, mu, grid)
        ip = dz.h1_inner(Wm, u, grid)
        th = np.angle(ip) if ip != 0 else 0.0
        return dz.kinetic_sq(u - np.exp(1j * th) * Wm, grid), th

    if mu_bounds is None:
        seed = float(np.clip((np.max(np.abs(u))) ** (-2 / (d - 2)), 0.05, 20.0))
        mu_bounds = (seed / 5.0, seed * 5.0)
    res = minimize_scalar(lambda m: dist2_theta(m)[0], bounds=mu_bounds,
                          method="bounded", options={"xatol": 1e-10})
    if not res.success:
        raise RuntimeError("modulation scale search failed on bracket %r: %s"
                           % (mu_bounds, res.message))
    d2, th = dist2_theta(res.x)
    return ModulationFit(th, res.x, np.sqrt(max(d2, 0.0)),
                         diagnostics={"bracket": list(mu_bounds),
                                      "nfev": int(res.nfev)})


class RateFit:
    def __init__(self, rate, intercept, residual, window, n_samples, flags=None):
        self.rate = float(rate)
        self.intercept = float(intercept)
        self.residual = float(residual)
        self.window = window
        self.n_samples = int(n_samples)
        self.flags = flags or []

    def as_dict(self):
        return {"rate": self.rate, "intercept": self.intercept,
                "residual": self.residual, "window": list(self.window),
                "n_samples": self.n_samples, "flags": self.flags}


def rate_fit(times, distances, floor):
    """Least-squares exponential rate of a distance history, d(t) ~ C e^{-rate t}.

    The window is trimmed to [first sample, last sample above 10*floor];
    needs at least 5 samples.
    """
    t = np.asarray(times, dtype=float)
    dd = np.asarray(distances, dtype=float)
    ok = np.isfinite(dd) & (dd > 0)
    t, dd = t[ok], dd[ok]
    above = np.nonzero(dd > 10 * floor)[0]
    if above.size == 0:
        raise ValueError("no samples above 10x floor; window empty")
    t, dd = t[:above[-1] + 1], dd[:above[-1] + 1]
    if t.size < 5:
        raise ValueError("need at least 5 samples above floor, got %d" % t.size)
    coefs = np.polyfit(t, np.log(dd), 1)
    resid = float(np.sqrt(np.mean((np.log(dd) - np.polyval(coefs, t)) ** 2)))
    rate = float(-coefs[0])
    flags = []
    if rate * (t[-1] - t[0]) < np.log(2):
        flags.append("non-decaying")
    return RateFit(rate, float(coefs[1]), resid, (float(t[0]), float(t[-1])),
                   t.size, flags)


def kinetic_dichotomy(trace, grid, deadband=1e-6):
    """Side of ||grad u(t)|| vs ||grad W|| along a trace.

    Returns (side, violations): side in {"below", "above", "at", "mixed"}
    within a relative dead-band; violations lists the sample times on the
    minority side when the sign is not constant.
    """
    kin_w = np.sqrt(dz.kinetic_sq(gs.sample_w(grid), grid))
    t = np.asarray(trace.times)
    rel = (np.asarray(trace.kinetic) - kin_w) / kin_w
    sign = np.where(rel > deadband, 1, np.where(rel < -deadband, -1, 0))
    if np.all(sign == 0):
        return "at", []
    counts = {s: int(np.sum(sign == s)) for s in (-1, 1)}
    major = -1 if counts[-1] >= counts[1] else 1
    viol = t[sign == -major].tolist()
    if viol:
        return "mixed", viol
    return ("below" if major < 0 else "above"), []


class ClassificationReport:
    def __init__(self, regime, kinetic_side, rate=None, modulation=None,
                 thresholds=None, details=None):
        self.regime = regime
        self.kinetic_side = kinetic_side
        self.rate = rate
        self.modulation = modulation
        self.thresholds = thresholds or {}
        self.details = details or {}

    def as_dict(self):
        out = {"regime": self.regime, "kinetic_side": self.kinetic_side,
               "thresholds": self.thresholds, "details": self.details}
        if self.rate is not None:
            out["rate"] = self.rate.as_dict()
        if self.modulation is not None:
            out["modulation"] = {"theta": self.modulation.theta,
                                 "mu": self.modulation.mu,
                                 "distance": self.modulation.distance}
        return out


def classify(trace, grid, proxy_threshold=0.05, dist_tol=0.25, floor=1e-3,
             deadband=1e-6):
    """Sort a trace into blowup / converges-to-W / scattering-proxy / undetermined.

    converges-to-W: the modulated H1-dot distance decays (positive fitted rate
    over the pre-departure window, trimmed at the distance minimum) down to
    below dist_tol.  scattering-proxy: the potential/kinetic ratio falls below
    proxy_threshold before the recorded reflection horizon.
    """
    side, viol = kinetic_dichotomy(trace, grid, deadband=deadband)
    thresholds = {"proxy_threshold": proxy_threshold, "dist_tol": dist_tol,
                  "floor": floor, "deadband": deadband}
    details = {"kinetic_violations": viol,
               "termination": dict(trace.termination)}

    if trace.termination.get("status") in ("blowup-detected", "nan"):
        return ClassificationReport("blowup", side, thresholds=thresholds,
                                    details=details)

    t = np.asarray(trace.times)
    dd = np.asarray(trace.h1_dist)
    fit = None
    if np.any(np.isfinite(dd)):
        # pre-departure window: distance still decreasing (unstable-mode
        # contamination grows as e^{+e0 t} past the minimum)
        imin = int(np.nanargmin(dd))
        details["dist_min"] = float(dd[imin])
        details["dist_min_t"] = float(t[imin])
        if imin >= 4:
            try:
                fit = rate_fit(t[:imin + 1], dd[:imin + 1], floor)
            except ValueError:
                fit = None
        if (fit is not None and fit.rate > 0 and "non-decaying" not in fit.flags
                and dd[imin] < dist_tol):
            return ClassificationReport("converges-to-W", side, rate=fit,
                                        thresholds=thresholds, details=details)

    ratio = trace.potential_ratio()
    below = np.nonzero(ratio < proxy_threshold)[0]
    if below.size:
        t_reach = float(t[below[0]])
        details["proxy_reached_t"] = t_reach
        horizon = trace.reflection.get("horizon_elapsed", np.inf)
        elapsed = abs(t_reach - t[0])
        details["reflection_horizon"] = horizon
        if elapsed <= horizon:
            return ClassificationReport("scattering-proxy", side, rate=fit,
                                        thresholds=thresholds, details=details)
        details["proxy_after_horizon"] = True

    return ClassificationReport("undetermined", side, rate=fit,
                                thresholds=thresholds, details=details)
