"""Normalized Ricci flow dg/dt = -2(Ric + (n-1) g) for rotationally symmetric metrics.

Two state layouts are supported on a fixed coordinate grid [0, X]:

* conformal (n = 2): g = e^(2u) times the hyperbolic metric, one unknown u.
* warped (any n): g = e^(2 alpha) dx^2 + (e^psi sinh x)^2 sigma, unknowns alpha, psi.

The grid carries even functions only, so regularity at x = 0 holds by
construction. Each field is stored as sech(x)^k times nodal values, which keeps
relative precision out in the tail where the functionals pick up e^((n-1) x).
At x = 0 the psi equation is replaced by a copy of the alpha equation; both
agree in exact arithmetic and the copy keeps (s_x / a)(0) = 1 to round-off.
The outer value of psi (resp. u) is pinned; alpha needs no condition there
because its equation is transport pointing out of the domain.

Time stepping is BDF2 with a Newton solve per step (the stiff diffusion is
treated implicitly in full), started by Richardson-extrapolated backward Euler.
Classical RK4 is available for cross-checks at small steps.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import entropy as EN
from . import mass as MS
from . import metric as M
from . import profiles as P
from .bvp import NewtonFailure, WeightedGrid
from .spectral import EvenChebGrid, QuadratureError


class FlowBlowUp(RuntimeError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class FlowInvariantError(RuntimeError):
    pass


@dataclass
class FlowState:
    t: float
    metric: M.RadialMetric
    cfl_dt: float
    layout: str
    nodes: np.ndarray
    r: np.ndarray

    def fields_table(self):
        """Columns for a CSV snapshot: (r, a, s) or (r, u)."""
        F = self.metric.fields(self.r)
        if self.layout == "conformal":
            return {"r": self.r, "u": F.alpha}
        return {"r": self.r, "a": np.exp(F.alpha), "s": np.exp(F.psi) * np.sinh(self.r)}


@dataclass
class FlowTrace:
    states: list = field(default_factory=list)
    times: list = field(default_factory=list)
    mu_series: list = field(default_factory=list)
    mu_residuals: list = field(default_factory=list)
    mass_series: list = field(default_factory=list)
    min_scal_series: list = field(default_factory=list)
    monotone_violations: list = field(default_factory=list)
    records: list = field(default_factory=list)
    flags: list = field(default_factory=list)
    final: FlowState = None
    error: str = ""

    def to_jsonl(self):
        return "".join(json.dumps(rec, default=_jsonable) + "\n" for rec in self.records)

    def write_jsonl(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_jsonl())


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    if isinstance(x, np.generic):
        return x.item()
    raise TypeError(type(x).__name__)


# ============================================================================
# right-hand side

class FlowSystem:
    """Discretized flow: state vector U, G(U) = dU/dt and its Jacobian."""

    def __init__(self, g0, X=None, M_nodes=160, k=None, conformal=None):
        if g0.origin != "smooth":
            raise M.MetricError("the flow needs a smooth origin")
        n = g0.n
        self.n = n
        X = min(g0.r_model, 20.0) if X is None else float(X)
        if not X > 2.0:
            raise M.MetricError("flow domain too small")
        self.grid = EvenChebGrid(X, M_nodes)
        self.wg = WeightedGrid(self.grid, float(n) if k is None else k)
        r = self.grid.r
        F = g0.fields(np.maximum(r, M.R_EVAL_MIN))
        self.psi_inf = float(g0.psi_inf)
        alpha = F.alpha
        psi_t = F.psi_t
        if conformal is None:
            conformal = n == 2 and self.psi_inf == 0.0 and np.allclose(alpha, psi_t, rtol=0, atol=1e-14)
        if conformal and n != 2:
            raise M.MetricError("the conformal layout is the 2-D reduction")
        self.layout = "conformal" if conformal else "warped"
        if abs(alpha[0] - psi_t[0] - self.psi_inf) > 1e-6:
            raise FlowInvariantError("initial data violate the smooth-origin condition")
        S = self.wg.S
        if self.layout == "conformal":
            self.U0 = alpha / S
        else:
            self.U0 = np.concatenate([alpha / S, psi_t / S])
        self.label = g0.label
        self.r_model = X
        sh = np.sinh(r)
        self._c = np.where(r > 0, 1.0 / np.tanh(np.where(r > 0, r, 1.0)), 0.0)
        self._ish2 = np.where(r > 0, 1.0 / np.where(r > 0, sh, 1.0) ** 2, 0.0)

    @property
    def size(self):
        return self.U0.size

    # -- pieces ---------------------------------------------------------
    def _jet(self, v):
        wg = self.wg
        return wg.S * v, wg.D1 @ v, wg.D2 @ v

    def curvature(self, U):
        """(kk, pp) node values: radial and tangential sectional curvature plus one."""
        n = self.n
        c = self._c
        if self.layout == "conformal":
            u, u1, u2 = self._jet(U)
            al, al1, al2, ps, ps1, ps2 = u, u1, u2, u, u1, u2
        else:
            m = self.grid.size
            al, al1, al2 = self._jet(U[:m])
            pt, ps1, ps2 = self._jet(U[m:])
            ps = pt + self.psi_inf
        A = np.exp(-2.0 * al)
        T = 2.0 * c * ps1 + ps2 + ps1 ** 2 - al1 * (c + ps1)
        T[0] = 3.0 * ps2[0] - al2[0]
        kk = A * T + np.expm1(-2.0 * al)
        if n == 2:
            return kk, np.zeros_like(kk)
        Q = A * np.expm1(2.0 * (al - ps)) * self._ish2
        Q[0] = A[0] * (al2[0] - ps2[0])
        pp = Q - np.expm1(-2.0 * al) - A * (2.0 * c * ps1 + ps1 ** 2)
        pp[0] = -kk[0]
        return kk, pp

    def scal(self, U):
        n = self.n
        kk, pp = self.curvature(U)
        return -n * (n - 1) - 2.0 * (n - 1) * kk + (n - 1) * (n - 2) * pp

    def raw_rhs(self, U):
        """Time derivatives of the fields themselves (not divided by the weight), unpinned."""
        n = self.n
        kk, pp = self.curvature(U)
        if self.layout == "conformal":
            return kk
        Fa = (n - 1) * kk
        Fp = kk - (n - 2) * pp
        Fp[0] = Fa[0]
        return np.concatenate([Fa, Fp])

    def rhs(self, U):
        S = self.wg.S
        F = self.raw_rhs(U)
        if self.layout == "conformal":
            G = F / S
            G[-1] = 0.0
            return G
        G = F / np.concatenate([S, S])
        G[-1] = 0.0
        return G

    def jacobian(self, U):
        n = self.n
        wg = self.wg
        c = self._c
        m = self.grid.size
        Sd = np.diag(wg.S)

        def assemble(c0, c1, c2):
            return c0[:, None] * Sd + c1[:, None] * wg.D1 + c2[:, None] * wg.D2

        if self.layout == "conformal":
            u, u1, u2 = self._jet(U)
            E = np.exp(-2.0 * u)
            lap = u2 + c * u1
            lap[0] = 2.0 * u2[0]
            c0 = -2.0 * E * lap - 2.0 * E
            c1 = E * c
            c2 = E.copy()
            c1[0] = 0.0
            c2[0] = 2.0 * E[0]
            J = assemble(c0, c1, c2) / wg.S[:, None]
            J[-1] = 0.0
            return J

        al, al1, al2 = self._jet(U[:m])
        pt, ps1, ps2 = self._jet(U[m:])
        ps = pt + self.psi_inf
        A = np.exp(-2.0 * al)
        T = 2.0 * c * ps1 + ps2 + ps1 ** 2 - al1 * (c + ps1)
        T[0] = 3.0 * ps2[0] - al2[0]
        z = np.zeros(m)
        k_a, k_a1, k_a2 = -2.0 * A * (T + 1.0), -A * (c + ps1), z.copy()
        k_p, k_p1, k_p2 = z.copy(), A * (2.0 * c + 2.0 * ps1 - al1), A.copy()
        k_a1[0] = 0.0
        k_a2[0] = -A[0]
        k_p1[0] = 0.0
        k_p2[0] = 3.0 * A[0]
        e2 = np.exp(2.0 * (al - ps)) * self._ish2
        Q = A * np.expm1(2.0 * (al - ps)) * self._ish2
        p_a = -2.0 * Q + 2.0 * A * e2 + 2.0 * A + 2.0 * A * (2.0 * c * ps1 + ps1 ** 2)
        p_p = -2.0 * A * e2
        p_p1 = -A * (2.0 * c + 2.0 * ps1)
        w = float(n - 2)
        Jaa = (n - 1) * assemble(k_a, k_a1, k_a2)
        Jap = (n - 1) * assemble(k_p, k_p1, k_p2)
        Jpa = assemble(k_a - w * p_a, k_a1, k_a2)
        Jpp = assemble(k_p - w * p_p, k_p1 - w * p_p1, k_p2)
        Jpa[0] = Jaa[0]
        Jpp[0] = Jap[0]
        J = np.block([[Jaa, Jap], [Jpa, Jpp]])
        J /= np.concatenate([wg.S, wg.S])[:, None]
        J[-1] = 0.0
        return J

    # -- states ---------------------------------------------------------
    def metric(self, U, label=""):
        m = self.grid.size
        k = self.wg.k
        if self.layout == "conformal":
            prof = P.Weighted(P.ChebProfile(self.grid, U), k)
            return M.RadialMetric(self.n, prof, 0.0, prof, r_model=self.r_model, label=label)
        a = P.Weighted(P.ChebProfile(self.grid, U[:m]), k)
        p = P.Weighted(P.ChebProfile(self.grid, U[m:]), k)
        return M.RadialMetric(self.n, p, self.psi_inf, a, r_model=self.r_model, label=label)

    def origin_gap(self, U):
        """|log((s_x / a)(0))|, zero for a smooth origin."""
        if self.layout == "conformal":
            return 0.0
        m = self.grid.size
        return abs(self.wg.S[0] * (U[0] - U[m]) - self.psi_inf)

    def sup_norm(self, U):
        """Sup over the fields of |alpha|, |psi| (or |u|)."""
        m = self.grid.size
        if self.layout == "conformal":
            return float(np.max(np.abs(self.wg.S * U)))
        return float(max(np.max(np.abs(self.wg.S * U[:m])),
                         np.max(np.abs(self.wg.S * U[m:] + self.psi_inf))))


def flow_rhs(state, system=None):
    """Time derivative of the metric fields of a FlowState.

    Returns dict with 'alpha' and 'psi' (warped) or 'u' (conformal), on state.r.
    """
    sys_ = system if system is not None else FlowSystem(state.metric, X=state.r[-1], M_nodes=len(state.r) - 1,
                                                        conformal=state.layout == "conformal")
    F = sys_.raw_rhs(state.nodes)
    m = sys_.grid.size
    if sys_.layout == "conformal":
        return {"r": sys_.grid.r, "u": F}
    return {"r": sys_.grid.r, "alpha": F[:m], "psi": F[m:]}


# ============================================================================
# integrators

class _Stepper:
    def __init__(self, system, dt, newton_tol=1e-13, max_iter=25):
        self.sys = system
        self.dt = dt
        self.tol = newton_tol
        self.max_iter = max_iter
        self.last_newton = 0.0

    def _solve(self, rhs_const, gamma, U0):
        """Solve U - gamma G(U) = rhs_const by Newton from U0."""
        sys_ = self.sys
        U = U0.copy()
        I = np.eye(U.size)
        scale = 1.0 + np.max(np.abs(rhs_const))
        for _ in range(self.max_iter):
            res = U - gamma * sys_.rhs(U) - rhs_const
            norm = float(np.max(np.abs(res)))
            if not np.isfinite(norm):
                raise FlowBlowUp("non-finite residual in the implicit solve")
            if norm < self.tol * scale:
                self.last_newton = norm
                return U
            J = I - gamma * sys_.jacobian(U)
            U = U - np.linalg.solve(J, res)
        res = U - gamma * sys_.rhs(U) - rhs_const
        norm = float(np.max(np.abs(res)))
        if norm < 1e3 * self.tol * scale:
            self.last_newton = norm
            return U
        raise FlowBlowUp(f"implicit step did not converge (residual {norm:.3e})")

    def euler(self, U, dt):
        return self._solve(U, dt, U)


class BDF2(_Stepper):
    def __init__(self, system, dt, **kw):
        super().__init__(system, dt, **kw)
        self.prev = None

    def step(self, U):
        dt = self.dt
        if self.prev is None:
            half = self.euler(self.euler(U, 0.5 * dt), 0.5 * dt)
            full = self.euler(U, dt)
            out = 2.0 * half - full
        else:
            out = self._solve((4.0 * U - self.prev) / 3.0, 2.0 * dt / 3.0, 2.0 * U - self.prev)
        self.prev = U
        return out


class RK4(_Stepper):
    def step(self, U):
        G = self.sys.rhs
        dt = self.dt
        k1 = G(U)
        k2 = G(U + 0.5 * dt * k1)
        k3 = G(U + 0.5 * dt * k2)
        k4 = G(U + dt * k3)
        return U + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


INTEGRATORS = {"bdf2": BDF2, "rk4": RK4}


def explicit_step_bound(system):
    """Rough stability limit for RK4: 2.78 over the spectral radius of the Jacobian at U0."""
    ev = np.linalg.eigvals(system.jacobian(system.U0))
    rho = float(np.max(np.abs(ev)))
    return 2.78 / rho if rho > 0 else math.inf


# ============================================================================
# driver

def integrate(system, dt, t_end, method="bdf2", record_times=(), scal_cap=1e6, log_cap=50.0):
    """Integrate from U0; returns ([(t, U) at record_times], final U, newton residual max).

    Blow-up is declared when the scalar curvature leaves [-scal_cap, scal_cap] or a
    log field leaves [-log_cap, log_cap]; a huge conformal factor can hide in a tame scal.
    """
    if not dt > 0 or not t_end >= 0:
        raise ValueError("dt must be positive and t_end nonnegative")
    stepper = INTEGRATORS[method](system, dt)
    steps = int(round(t_end / dt))
    if abs(steps * dt - t_end) > 1e-9 * max(1.0, t_end):
        raise ValueError("t_end must be a multiple of dt")
    want = {int(round(t / dt)): t for t in record_times}
    U = system.U0.copy()
    out = [(0.0, U.copy())] if 0 in want else []
    worst = 0.0
    for i in range(1, steps + 1):
        with np.errstate(all="ignore"):
            U = stepper.step(U)
            scal = system.scal(U)
            size = system.sup_norm(U)
        worst = max(worst, stepper.last_newton)
        if not (np.all(np.isfinite(scal)) and np.max(np.abs(scal)) <= scal_cap
                and size <= log_cap):
            raise FlowBlowUp(f"blow-up at t = {i * dt:.6g}: max|scal| = {np.max(np.abs(scal)):.3e}, "
                             f"max|field| = {size:.3e}", trace=(out, i * dt, U))
        if i in want:
            out.append((i * dt, U.copy()))
    return out, U, worst


def run_flow(g0, ref, schedule, X=None, nodes=160, method="bdf2", mu_tol=1e-7, with_mass=True,
             with_entropy=True, scal_cap=1e6, drift_tol=1e-6, entropy_nodes=193):
    """Integrate and evaluate entropy and mass at record points.

    schedule: dict with dt, t_end, record_every.
    """
    dt = float(schedule["dt"])
    t_end = float(schedule["t_end"])
    every = float(schedule.get("record_every", t_end))
    system = FlowSystem(g0, X=X, M_nodes=nodes)
    count = int(round(t_end / every))
    record_times = [i * every for i in range(count + 1)]
    trace = FlowTrace()
    try:
        snaps, U, newton_res = integrate(system, dt, t_end, method, record_times, scal_cap)
    except FlowBlowUp as exc:
        snaps = exc.trace[0] if exc.trace else []
        trace.error = str(exc)
        trace.flags.append("blow_up")
        _fill(trace, system, ref, snaps, dt, with_mass, with_entropy, entropy_nodes, tolerant=True)
        exc.trace = trace
        raise
    _fill(trace, system, ref, snaps, dt, with_mass, with_entropy, entropy_nodes)
    # pinned-boundary drift: what the free equation would have done to psi (or u) at X
    raw = system.raw_rhs(U)
    drift = abs(raw[-1]) * t_end
    if drift > drift_tol:
        trace.flags.append("boundary_drift")
    trace.final = FlowState(t_end, system.metric(U, f"{g0.label} @ t={t_end:g}"), dt, system.layout, U, system.grid.r)
    tol = mu_tol + (max(trace.mu_residuals) if trace.mu_residuals else 0.0)
    for i in range(1, len(trace.mu_series)):
        d = trace.mu_series[i] - trace.mu_series[i - 1]
        if d < -tol:
            trace.monotone_violations.append((trace.times[i], d))
    for rec in trace.records:
        rec["residuals"]["newton_step"] = newton_res
        rec["residuals"]["boundary_drift"] = drift
    return trace


# the states just before a blow-up can defeat the mass and entropy solvers
_EVAL_FAILURES = (NewtonFailure, EN.BoundViolation, M.MetricError, QuadratureError, FloatingPointError)


def _fill(trace, system, ref, snaps, dt, with_mass, with_entropy, entropy_nodes, tolerant=False):
    for t, U in snaps:
        g = system.metric(U, f"{system.label} @ t={t:g}")
        gap = system.origin_gap(U)
        flags = []
        if gap > 1e-6:
            flags.append("origin_condition")
        scal = system.scal(U)
        mu = mu_res = m = m_err = math.nan
        flat = system.sup_norm(U) == 0.0
        try:
            if with_mass or with_entropy:
                if flat:
                    m = m_err = 0.0
                    rep = None
                else:
                    rep = MS.volume_renormalized_mass(g, ref)
                    m, m_err = rep.m_vr, rep.err_estimate
                    flags += list(rep.flags)
            if with_entropy:
                if flat:
                    mu, mu_res = 0.0, 0.0
                else:
                    sol = EN.solve_entropy_minimizer(g, ref, nodes=entropy_nodes, mass_report=rep, two_start=False)
                    mu, mu_res = sol.mu, sol.residual_norm
        except _EVAL_FAILURES:
            if not tolerant:
                raise
            flags.append("evaluation_failed")
        trace.states.append(FlowState(t, g, dt, system.layout, U, system.grid.r))
        trace.times.append(t)
        trace.mu_series.append(mu)
        trace.mu_residuals.append(mu_res if math.isfinite(mu_res) else 0.0)
        trace.mass_series.append(m)
        trace.min_scal_series.append(float(np.min(scal)))
        trace.records.append({
            "t": t, "mu": mu, "mass": m, "min_scal": float(np.min(scal)),
            "residuals": {"mu": mu_res, "mass_err": m_err, "origin": gap},
            "sup_norm": system.sup_norm(U), "flags": flags,
        })


def monotonicity_report(trace, tol=1e-7):
    mu = np.asarray(trace.mu_series, dtype=float)
    if mu.size == 0:
        raise ValueError("empty trace")
    d = np.diff(mu)
    worst = float(max(0.0, -d.min())) if d.size else 0.0
    if worst == 0.0:
        verdict = "monotone"
    elif worst <= tol:
        verdict = "violations-within-tolerance"
    else:
        verdict = "failed"
    return {"verdict": verdict, "max_violation": worst, "dissipation": float(d.sum()) if d.size else 0.0,
            "records": int(mu.size)}


def reversed_trace(trace):
    """Same records in reverse time order (a negative control for monotonicity_report)."""
    out = FlowTrace()
    T = trace.times[-1]
    out.times = [T - t for t in trace.times[::-1]]
    out.mu_series = trace.mu_series[::-1]
    out.mass_series = trace.mass_series[::-1]
    out.min_scal_series = trace.min_scal_series[::-1]
    return out
