"""Verification suites run by `ahrenorm verify`. Each returns a list of table rows."""

import math

import numpy as np

from . import conformal as C
from . import entropy as EN
from . import flow as FL
from . import mass as MS
from . import metric as M
from . import profiles as P
from .report import Row


def _row(check, expected, got, tol, ok):
    return Row(check, expected, float(got), float(tol), bool(ok))


def _close(check, target, got, tol):
    return _row(check, f"{target:g}", got, tol, abs(got - target) <= tol)


def mass_core(cfg, scale=1.0):
    rows = []
    for n in (2, 3, 4, 5):
        g = M.make_catalog_metric("hyperbolic", {"n": n})
        rows.append(_close(f"m_vr(hyperbolic n={n})", 0.0, MS.volume_renormalized_mass(g, M.ReferenceModel(n)).m_vr,
                           1e-8 * scale))
    ref = M.ReferenceModel(3)
    for amp in (1e-3, 1e-2, 1e-1):
        prof = {"kind": "sech", "amplitude": amp, "power": 3.0}
        g = M.make_catalog_metric("radial-conformal", {"n": 3, "profile": prof})
        rep = MS.volume_renormalized_mass(g, ref)
        exact = C.conformal_mass(ref, M.conformal_profile(prof))
        tol = max(1e-6 * abs(exact), 3 * rep.err_estimate) * scale
        rows.append(_close(f"boundary+volume vs gap formula (amp={amp:g})", exact, rep.m_vr, tol))
    g = M.make_catalog_metric("bump", {"n": 3, "amplitude": 1e-2})
    base = MS.volume_renormalized_mass(g, ref)
    moved = MS.volume_renormalized_mass(M.radial_shift(g, 0.05), ref)
    rows.append(_close("radial shift invariance (bump n=3)", base.m_vr, moved.m_vr,
                       max(base.err_estimate, moved.err_estimate, 1e-9 * abs(base.m_vr)) * scale))
    for spec in cfg.extra_metrics if cfg is not None else []:
        gx = cfg.build_metric(spec)
        rep = MS.volume_renormalized_mass(gx, cfg.build_reference(gx))
        label = f"m_vr({gx.label})"
        if rep.divergent:
            rows.append(Row(label, "finite", rep.m_vr, math.nan, False, flagged=True))
        else:
            rows.append(_row(label, "finite", rep.m_vr, rep.err_estimate, math.isfinite(rep.m_vr)))
    return rows


def twod(cfg, scale=1.0):
    rows = []
    cases = [(M.make_catalog_metric("conic2d", {"omega": om, "core_power": 1.5}), om)
             for om in (math.pi, 1.5 * math.pi, 2 * math.pi)]
    cases.append((M.make_catalog_metric("bump", {"n": 2, "amplitude": 5e-2, "center": 2.5}), 2 * math.pi))
    cases.append((M.make_catalog_metric("radial-conformal",
                                        {"n": 2, "profile": {"kind": "gauss", "amplitude": 1e-2, "width": 1.5}}),
                   2 * math.pi))
    for g, om in cases:
        lhs, rhs = MS.mass_identity_2d(g, om)
        rows.append(_close(f"2-D identity {g.label}", rhs, lhs, 1e-6 * scale))
    return rows


def conformal(cfg, scale=1.0):
    rows = []
    ref = M.ReferenceModel(3)
    rows.append(_close("F(1)", 0.0, float(C.gap_function_F(1.0, 3)), 1e-15))
    g = M.make_catalog_metric("bump", {"n": 3, "amplitude": 1e-2})
    sol = C.yamabe_normalize(g, ref)
    rows.append(_row("Yamabe residual", "< tol", sol.residual_norm, 1e-8 * scale, sol.residual_norm < 1e-8 * scale))
    h = sol.normalized_metric()
    rr = np.linspace(0.5, 0.6 * h.r_model, 200)
    scal_err = float(np.max(np.abs(M.scalar_curvature(h, rr) + 6.0)))
    rows.append(_close("scal of normalized metric + 6", 0.0, scal_err, 1e-6 * scale))
    for amp in (1e-3, 1e-2):
        w = P.sech_power(amp, 2.5)
        res = C.conformal_pmt_check(ref, w)
        rows.append(_row(f"conformal mass >= 0 (sech^2.5, amp={amp:g})", ">= 0", res.get("mass", math.nan),
                         1e-8 * scale, res["verdict"] == "pass"))
    return rows


def entropy(cfg, scale=1.0):
    rows = []
    ref = M.ReferenceModel(3)
    g = M.make_catalog_metric("bump", {"n": 3, "amplitude": 1e-2})
    sol = EN.solve_entropy_minimizer(g, ref)
    f = sol.f_nodes
    rows.append(_row("EL residual", "< tol", sol.residual_norm, 1e-9 * scale, sol.residual_norm < 1e-9 * scale))
    inside = bool(np.all(f >= sol.bound_lo - 1e-12) and np.all(f <= sol.bound_hi + 1e-12))
    rows.append(_row("minimizer within bounds", "inside", float(f.max()), sol.bound_hi, inside))
    rows.append(_close("two-start gap", 0.0, sol.uniqueness_gap, 1e-8 * scale))
    m = sol.mass_report
    tol = 1e-6 + 3 * m.err_estimate
    rows.append(_row("mu >= -m_vr", f">= {-m.m_vr:.6g}", sol.mu, tol, sol.mu >= -m.m_vr - tol * scale))
    rows.append(_row("mu <= S", f"<= {m.s_action:.6g}", sol.mu, tol, sol.mu <= m.s_action + tol * scale))
    h = C.yamabe_normalize(g, ref).normalized_metric()
    sh = EN.solve_entropy_minimizer(h, ref)
    rows.append(_close("mu + m_vr (constant scalar)", 0.0, sh.mu + sh.mass_report.m_vr, 1e-6 * scale))
    return rows


def variations(cfg, scale=1.0):
    rows = []
    ref = M.ReferenceModel(3)
    g = M.make_catalog_metric("bump", {"n": 3, "amplitude": 1e-2})
    sh = P.shell(2.5, 0.7)
    h = MS.RadialPerturbation(lambda x: 0.3 * sh(x), lambda x: -0.5 * sh(x))
    a, fd = MS.first_variation_S(g, h, ref)
    rows.append(_close("dS analytic vs FD (relative)", 0.0, abs(a - fd) / abs(fd), 1e-4 * scale))
    a, fd = EN.first_variation_entropy(g, h, ref)
    rows.append(_close("dmu analytic vs FD (relative)", 0.0, abs(a - fd) / abs(fd), 1e-4 * scale))
    pe = M.make_catalog_metric("hyperbolic", {"n": 3})
    a, _ = MS.first_variation_S(pe, h, ref)
    rows.append(_close("dS at hyperbolic", 0.0, a, 1e-8 * scale))
    rep = EN.conformal_second_variation(ref, P.gaussian(0.05, 1.5))
    rows.append(_close("second variation vs FD (relative)", 0.0,
                       abs(rep.analytic - rep.finite_diff) / abs(rep.finite_diff), 1e-2 * scale))
    rows.append(_row("second variation <= bound", f"<= {rep.bound:.6g}", rep.analytic, 0.0, rep.analytic <= rep.bound))
    return rows


def flow(cfg, scale=1.0):
    rows = []
    hyp = M.make_catalog_metric("hyperbolic", {"n": 3, "r_model": 20.0})
    sys_ = FL.FlowSystem(hyp)
    _, U, _ = FL.integrate(sys_, 0.05, 0.5)
    rows.append(_close("hyperbolic fixed point drift", 0.0, sys_.sup_norm(U), 1e-8 * scale))
    g = M.make_catalog_metric("radial-conformal",
                              {"n": 2, "r_model": 20.0, "profile": {"kind": "gauss", "amplitude": 1e-2, "width": 1.5}})
    tr = FL.run_flow(g, M.ReferenceModel(2), {"dt": 0.02, "t_end": 0.2, "record_every": 0.05}, with_mass=True)
    rep = FL.monotonicity_report(tr, 1e-7 * scale)
    rows.append(_row("2-D mu nondecreasing", "max violation <= tol", rep["max_violation"], 1e-7 * scale,
                     rep["verdict"] != "failed"))
    b = M.make_catalog_metric("bump", {"n": 3, "amplitude": 1e-2, "r_model": 14.0})
    s3 = FL.FlowSystem(b, M_nodes=96)
    fin = {dt: FL.integrate(s3, dt, 0.2)[1] for dt in (0.02, 0.01, 0.0025)}
    sw = np.concatenate([s3.wg.S, s3.wg.S])
    e = [np.max(np.abs(sw * (fin[dt] - fin[0.0025]))) for dt in (0.02, 0.01)]
    ratio = e[0] / e[1]
    rows.append(_row("BDF2 error ratio under dt halving", "4 +- 30%", ratio, 0.3 * 4, 2.8 <= ratio <= 5.2))
    return rows


SUITES = {"mass-core": mass_core, "twod": twod, "conformal": conformal, "entropy": entropy,
          "variations": variations, "flow": flow}

