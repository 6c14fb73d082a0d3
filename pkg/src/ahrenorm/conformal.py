"""Radial conformal normalization to constant scalar curvature and the conformal mass."""

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from . import metric as M
from . import profiles as P
from .bvp import NewtonFailure, WeightedGrid, laplacian, newton
from .jet import Jet
from .spectral import ChebGrid, panel_quad


@dataclass
class ConformalSolution:
    """w with e^(2w) g of constant scalar curvature -n(n-1).

    phi = e^(-(n-2) w / 2) is the conformal factor of g over its normalization,
    so g = phi^(4/(n-2)) g_normalized.
    """
    n: int
    wgrid: WeightedGrid
    v_nodes: np.ndarray
    residual_norm: float
    truncation: float
    decay_fit: M.DecayFit
    base: M.RadialMetric
    newton_history: list

    @property
    def grid(self):
        return self.wgrid.grid

    @property
    def w_nodes(self):
        return self.wgrid.values(self.v_nodes)

    @property
    def w(self):
        return self.wgrid.profile(self.v_nodes)

    @property
    def phi_nodes(self):
        return np.exp(-0.5 * (self.n - 2) * self.w_nodes)

    def scal_defect(self, r):
        return M.geometry(self.base, r).defect

    def normalized_metric(self):
        out = M.conformal_metric(self.base, self.w)
        return replace(out, r_model=min(self.base.r_model, self.grid.L))

    def to_json(self):
        return json.dumps({
            "r_nodes": self.grid.r.tolist(), "w_nodes": self.w_nodes.tolist(),
            "phi_nodes": self.phi_nodes.tolist(), "residual": self.residual_norm,
            "truncation": self.truncation,
            "decay": {"rate": _num(self.decay_fit.rate), "amplitude": self.decay_fit.amplitude,
                      "window": list(self.decay_fit.window), "residual": self.decay_fit.regression_residual},
        }, indent=2)


def _num(x):
    return x if math.isfinite(x) else str(x)


# ============================================================================
# closed-form pieces

def gap_function_F(x, n):
    """x^(2n/(n-2)) - 1 + (n/2) x - (n/2) x^((n+2)/(n-2))."""
    if n < 3:
        raise ValueError("the gap function needs n >= 3")
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("the gap function is defined for x > 0")
    return x ** (2.0 * n / (n - 2)) - 1.0 + 0.5 * n * x - 0.5 * n * x ** ((n + 2.0) / (n - 2))


def gap_of_exponent(w, n):
    """gap_function_F(e^((n-2) w / 2)) written with expm1, accurate for small w."""
    return np.expm1(n * w) + 0.5 * n * (np.expm1(0.5 * (n - 2) * w) - np.expm1(0.5 * (n + 2) * w))


def conformal_defect(n, w, w1, w2, coth):
    """scal + n(n-1) of e^(2w) times the hyperbolic metric, from w and its derivatives."""
    lap = -(w2 + (n - 1) * coth * w1)
    return (-n * (n - 1) * np.expm1(-2.0 * w)
            + np.exp(-2.0 * w) * (2.0 * (n - 1) * lap - (n - 1) * (n - 2) * w1 ** 2))


def _upper_limit(n, w):
    top = 650.0 / (n - 1)
    if isinstance(w, (P.SplineProfile,)):
        top = min(top, float(w.r[-1]))
    if getattr(w, "grid", None) is not None:
        top = min(top, w.grid.L)
    return top


def conformal_integrand(n, w):
    om = M.sphere_volume(n)

    def f(r):
        r = np.maximum(r, M.R_ORIGIN_FLOOR)
        v = w(Jet.variable(r))
        coth = 1.0 / np.tanh(r)
        d = conformal_defect(n, v.v, v.d, v.dd, coth)
        phi_pow = np.exp(0.5 * (n + 2) * v.v)
        with np.errstate(over="ignore", invalid="ignore"):
            out = (2.0 * (n - 1) * gap_of_exponent(v.v, n) + d * phi_pow) * np.sinh(r) ** (n - 1)
        return om * np.where(np.isfinite(out), out, 0.0)
    return f


def conformal_mass(ref, w, upper=None):
    """Mass of e^(2w) ref from the gap-function integral over the whole manifold."""
    n = ref.n
    if n < 3:
        raise M.MetricError("the conformal mass formula needs n >= 3")
    top = _upper_limit(n, w) if upper is None else upper
    val, _ = panel_quad(conformal_integrand(n, w), 0.0, top, atol=1e-13, rtol=1e-13)
    return val


def conformal_pmt_check(ref, w, tol=1e-8, grid_points=4000):
    """Positive-mass verdict for e^(2w) ref; inapplicable when the scalar defect goes negative."""
    n = ref.n
    top = min(_upper_limit(n, w), 60.0)
    r = np.linspace(M.R_ORIGIN_FLOOR, top, grid_points)
    v = w(Jet.variable(r))
    d = conformal_defect(n, v.v, v.d, v.dd, 1.0 / np.tanh(r))
    sup_w = float(np.max(np.abs(v.v)))
    if np.min(d) < -tol * max(1.0, np.max(np.abs(d))):
        return {"verdict": "inapplicable", "min_defect": float(np.min(d)), "sup_w": sup_w}
    mass = conformal_mass(ref, w)
    ok_sign = mass >= -tol
    ok_rigid = not (mass < tol) or sup_w < math.sqrt(tol)
    return {"verdict": "pass" if ok_sign and ok_rigid else "fail", "mass": mass, "sup_w": sup_w,
            "min_defect": float(np.min(d)), "nonnegative": bool(ok_sign), "rigidity": bool(ok_rigid)}


# ============================================================================
# normalization

def yamabe_normalize(g, ref=None, nodes=193, r_max=None, tol=1e-10, study=True):
    """Solve for w with scal(e^(2w) g) = -n(n-1), w'(0) = 0, w(r_max) = 0."""
    n = g.n
    if n < 3:
        raise M.MetricError("conformal normalization is implemented for n >= 3")
    if ref is not None and M.reference_metric(ref).n != n:
        raise M.MetricError("dimension mismatch")
    L = min(g.r_model, 30.0) if r_max is None else float(r_max)
    sol = _solve_yamabe(g, L, nodes, tol)
    truncation = 0.0
    if study:
        L2 = 0.8 * L
        sol2 = _solve_yamabe(g, L2, max(64, int(round(nodes * 0.8))), tol)
        common = sol2.grid.r[sol2.grid.r < 0.5 * L2]
        truncation = float(np.max(np.abs(sol.w(Jet.variable(common)).v - sol2.w(Jet.variable(common)).v)))
    sol.truncation = truncation
    sol.residual_norm = max(sol.residual_norm, truncation)
    return sol


def _solve_yamabe(g, L, nodes, tol):
    n = g.n
    rate = M.defect_decay(g).rate
    wg = WeightedGrid(ChebGrid(L, nodes - 1), min(float(n), rate))
    Lap, G = laplacian(g, wg)
    d = G.defect
    A = G.A
    k1 = 2.0 * (n - 1)
    S = np.diag(wg.S)

    def system(v, theta=1.0):
        w = wg.S * v
        w1 = wg.D1 @ v
        e2m1 = np.expm1(2.0 * w)
        res = (k1 * (Lap @ v + n * w) - (n - 1) * (n - 2) * A * w1 ** 2 + theta * d
               + n * (n - 1) * (e2m1 - 2.0 * w))
        jac = (k1 * (Lap + n * S)
               - 2.0 * (n - 1) * (n - 2) * (A * w1)[:, None] * wg.D1
               + (2.0 * n * (n - 1) * e2m1 * wg.S)[:, None] * np.eye(wg.size))
        return res, jac

    v = np.zeros(wg.size)
    try:
        out = newton(wg, system, v, tol=tol)
        history = out.history
    except NewtonFailure as exc:
        # continuation in the amplitude of the data
        history = list(exc.history)
        for theta in np.linspace(0.1, 1.0, 10):
            out = newton(wg, lambda u, th=theta: system(u, th), v, tol=tol)
            v = out.u
            history += out.history
    rr = np.linspace(0.3 * L, 0.8 * L, 32)
    fit = M.fit_decay_rate((rr, wg.profile(out.u)(Jet.variable(rr)).v))
    return ConformalSolution(n, wg, out.u, out.residual, 0.0, fit, g, history)
