"""The eleven acceptance criteria, each with its stated tolerance and time budget."""

import math
import time

import numpy as np
import pytest

from ahrenorm import conformal as C
from ahrenorm import entropy as EN
from ahrenorm import flow as FL
from ahrenorm import mass as MS
from ahrenorm import metric as M
from ahrenorm import profiles as P
from ahrenorm.jet import Jet

from conftest import record_criterion


def finish(number, title, failures, elapsed, budget, detail=""):
    within = budget is None or elapsed < budget
    ok = not failures and within
    msg = (f"{elapsed:.1f}s" if budget is None else f"{elapsed:.1f}s of {budget}s") + (f"; {detail}" if detail else "")
    if failures:
        msg += "; " + "; ".join(failures[:3])
    record_criterion(number, title, ok, msg)
    print(f"criterion {number}: {'PASS' if ok else 'FAIL'} ({msg})")
    assert not failures, failures
    assert within, f"took {elapsed:.1f}s, budget {budget}s"


def defect_min(g, top=None):
    r = np.linspace(1e-3, 0.95 * g.r_model if top is None else top, 6000)
    return float(np.min(M.geometry(g, r).defect))


# ----------------------------------------------------------------------------
def test_c01_zero_mass_reference():
    t0 = time.perf_counter()
    failures = []
    for n in (2, 3, 4, 5):
        g = M.make_catalog_metric("hyperbolic", {"n": n})
        ref = M.ReferenceModel(n)
        m = MS.volume_renormalized_mass(g, ref).m_vr
        mu = EN.solve_entropy_minimizer(g, ref).mu
        if not abs(m) < 1e-8:
            failures.append(f"n={n}: m={m:.3e}")
        if not abs(mu) < 1e-8:
            failures.append(f"n={n}: mu={mu:.3e}")
    finish(1, "zero mass and entropy of the reference", failures, time.perf_counter() - t0, 5)


# ----------------------------------------------------------------------------
def test_c02_two_dimensional_identity():
    t0 = time.perf_counter()
    cases = [(M.make_catalog_metric("conic2d", {"omega": om, "core_power": p}), om)
             for om in (math.pi, 1.5 * math.pi, 2 * math.pi) for p in (1.2, 1.5)]
    for amp in (5e-2, -5e-2):
        cases.append((M.make_catalog_metric("bump", {"n": 2, "amplitude": amp, "center": 2.5}), 2 * math.pi))
    cases.append((M.make_catalog_metric("radial-conformal",
                                        {"n": 2, "profile": {"kind": "gauss", "amplitude": 1e-2, "width": 1.5}}),
                  2 * math.pi))
    cases.append((M.make_catalog_metric("radial-conformal",
                                        {"n": 2, "profile": {"kind": "sech", "amplitude": -2e-2, "power": 2.5}}),
                  2 * math.pi))
    failures, worst, pmt_checked = [], 0.0, 0
    for g, om in cases:
        lhs, rhs = MS.mass_identity_2d(g, om)
        worst = max(worst, abs(lhs - rhs))
        if not abs(lhs - rhs) < 1e-6:
            failures.append(f"{g.label}: |{lhs:.6g} - {rhs:.6g}|")
        if defect_min(g) >= 0.0:
            pmt_checked += 1
            if not lhs >= -1e-8:
                failures.append(f"{g.label}: m + 2(2pi - omega) = {lhs:.3e} < 0")
    assert pmt_checked >= 3
    finish(2, "2-D Gauss-Bonnet identity", failures, time.perf_counter() - t0, 30,
           f"{len(cases)} metrics, worst {worst:.1e}, sign checked on {pmt_checked}")


# ----------------------------------------------------------------------------
def test_c03_conformal_mass_cross_check():
    t0 = time.perf_counter()
    ref = M.ReferenceModel(3)
    failures, worst = [], 0.0
    for amp in (1e-3, 1e-2, 1e-1):
        prof = {"kind": "sech", "amplitude": amp, "power": 3.0}
        g = M.make_catalog_metric("radial-conformal", {"n": 3, "profile": prof})
        rep = MS.volume_renormalized_mass(g, ref)
        exact = C.conformal_mass(ref, M.conformal_profile(prof))
        rel = abs(rep.m_vr - exact) / abs(exact)
        worst = max(worst, rel)
        if not (rel < 1e-6 or abs(rep.m_vr - exact) < 3 * rep.err_estimate):
            failures.append(f"amp={amp}: {rep.m_vr:.12g} vs {exact:.12g}")
    finish(3, "conformal mass cross-check", failures, time.perf_counter() - t0, 60, f"worst relative {worst:.1e}")


# ----------------------------------------------------------------------------
def test_c04_conformal_positive_mass():
    t0 = time.perf_counter()
    ref = M.ReferenceModel(3)
    rng = np.random.default_rng(7)
    powers = np.linspace(2.1, 2.9, 5)
    amps = [1e-12, 1e-8, 1e-4, 3e-2]
    family = [(k, a * rng.uniform(0.5, 2.0)) for k in powers for a in amps]
    failures, verified = [], 0
    for k, a in family:
        w = P.sech_power(a, k)
        res = C.conformal_pmt_check(ref, w)
        if res["verdict"] == "inapplicable":
            continue
        verified += 1
        m, sup_w = res["mass"], res["sup_w"]
        if not m >= -1e-8:
            failures.append(f"k={k:.2f} a={a:.1e}: mass {m:.3e}")
        if m < 1e-6 and not sup_w < 1e-3:
            failures.append(f"k={k:.2f} a={a:.1e}: small mass {m:.3e} with sup|w| = {sup_w:.1e}")
    if verified < 20:
        failures.append(f"only {verified} factors with nonnegative defect")
    finish(4, "conformal positive mass on a generated family", failures, time.perf_counter() - t0, 60,
           f"{verified} factors")


# ----------------------------------------------------------------------------
def test_c05_gap_function_analytics():
    t0 = time.perf_counter()
    failures = []
    for n in (3, 4, 5, 7):
        if abs(float(C.gap_function_F(1.0, n))) != 0.0:
            failures.append(f"n={n}: F(1) != 0")
        h = 1e-3
        F = [float(C.gap_function_F(1 + j * h, n)) for j in (-2, -1, 1, 2)]
        d = (F[0] - 8 * F[1] + 8 * F[2] - F[3]) / (12 * h)
        if not abs(d) < 1e-10:
            failures.append(f"n={n}: F'(1) = {d:.2e}")
        x = 1.0 + np.geomspace(1e-4, 9.0, 400)
        if not np.all(C.gap_function_F(x, n) > 0):
            failures.append(f"n={n}: F not positive on (1, 10]")
    x = np.linspace(-0.99, 5.0, 6000)
    for n in (2, 3, 4, 5):
        G = EN.G_function(x, n)
        if not np.all(G >= 0):
            failures.append(f"n={n}: G negative")
        zeros = x[G == 0.0]
        if not (zeros.size == 0 or np.all(np.abs(zeros) < 1e-12)):
            failures.append(f"n={n}: extra zeros of G")
        if EN.G_function(np.array([0.0, -2.0]), n).tolist() != [0.0, 0.0]:
            failures.append(f"n={n}: G(0), G(-2) not zero")
        if not np.all(G[np.abs(x) > 1e-3] > 0):
            failures.append(f"n={n}: G vanishes away from 0")
    finish(5, "gap function analytics", failures, time.perf_counter() - t0, 1)


# ----------------------------------------------------------------------------
_C6 = {}

EL_METRICS = [
    ("bump", {"n": 3, "amplitude": 1e-2}),
    ("bump", {"n": 4, "amplitude": -1e-2, "center": 2.5}),
    ("radial-conformal", {"n": 3, "profile": {"kind": "sech", "amplitude": 1e-2, "power": 2.5}}),
    ("bump", {"n": 5, "amplitude": 2e-2, "center": 2.0}),
]


@pytest.mark.parametrize("name,params", EL_METRICS)
def test_c06_euler_lagrange_solver(name, params):
    t0 = time.perf_counter()
    g = M.make_catalog_metric(name, params)
    ref = M.ReferenceModel(g.n)
    sol = EN.solve_entropy_minimizer(g, ref, r_max=15.0)
    failures = []
    if not sol.residual_norm < 1e-9:
        failures.append(f"residual {sol.residual_norm:.2e}")
    f = sol.f_nodes
    if np.any(f < sol.bound_lo) or np.any(f > sol.bound_hi):
        failures.append("outside the envelope")
    if not sol.uniqueness_gap < 1e-8:
        failures.append(f"two-start gap {sol.uniqueness_gap:.2e}")
    if not sol.decay_fit.rate > 0:
        failures.append(f"decay rate {sol.decay_fit.rate}")
    wide = EN.solve_entropy_minimizer(g, ref, r_max=30.0, two_start=False)
    if not abs(wide.mu - sol.mu) < 1e-6:
        failures.append(f"R_max doubling moves mu by {abs(wide.mu - sol.mu):.2e}")
    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed < 30
    _C6[g.label] = (ok, f"{g.label} {elapsed:.1f}s" + ("" if ok else f" {failures}"))
    record_criterion(6, "Euler-Lagrange solver", all(v[0] for v in _C6.values()),
                     "; ".join(v[1] for v in _C6.values()))
    print(f"criterion 6 [{g.label}]: {'PASS' if ok else 'FAIL'} "
          f"(residual {sol.residual_norm:.1e}, gap {sol.uniqueness_gap:.1e}, "
          f"rate {sol.decay_fit.rate:.3f}, dmu {abs(wide.mu - sol.mu):.1e}, {elapsed:.1f}s)")
    assert not failures, failures
    assert elapsed < 30


# ----------------------------------------------------------------------------
def test_c07_entropy_sandwich():
    t0 = time.perf_counter()
    candidates = [
        ("radial-conformal", {"n": 3, "profile": {"kind": "sech", "amplitude": 1e-2, "power": 2.5}}),
        ("radial-conformal", {"n": 3, "profile": {"kind": "sech", "amplitude": 1e-1, "power": 2.9}}),
        ("radial-conformal", {"n": 4, "profile": {"kind": "sech", "amplitude": 1e-2, "power": 3.5}}),
        ("bump", {"n": 3, "amplitude": 1e-2}),
        ("radial-conformal", {"n": 3, "profile": {"kind": "gauss", "amplitude": 1e-2, "width": 1.5}}),
    ]
    failures, checked = [], 0
    for name, params in candidates:
        g = M.make_catalog_metric(name, params)
        if defect_min(g) < 0:
            continue
        checked += 1
        sol = EN.solve_entropy_minimizer(g, M.ReferenceModel(g.n))
        rep = sol.mass_report
        tol = 1e-6 + 3 * rep.err_estimate
        if not (-rep.m_vr - tol <= sol.mu <= rep.s_action + tol):
            failures.append(f"{g.label}: {-rep.m_vr:.6g} <= {sol.mu:.6g} <= {rep.s_action:.6g} fails")
    constant = [M.make_catalog_metric("hyperbolic", {"n": 3}), M.make_catalog_metric("hyperbolic", {"n": 4})]
    for name, params in (("bump", {"n": 3, "amplitude": 1e-2}), ("bump", {"n": 4, "amplitude": -1e-2})):
        g = M.make_catalog_metric(name, params)
        constant.append(C.yamabe_normalize(g, M.ReferenceModel(g.n)).normalized_metric())
    for h in constant:
        sol = EN.solve_entropy_minimizer(h, M.ReferenceModel(h.n))
        s = abs(sol.mu + sol.mass_report.m_vr)
        fmax = float(np.max(np.abs(sol.f_nodes)))
        if not s < 1e-6:
            failures.append(f"{h.label}: |mu + m| = {s:.2e}")
        if not fmax < 1e-8:
            failures.append(f"{h.label}: sup|f| = {fmax:.2e}")
    if checked < 3:
        failures.append(f"only {checked} metrics with nonnegative defect")
    finish(7, "entropy sandwich", failures, time.perf_counter() - t0, None,
           f"{checked} sandwich metrics, {len(constant)} constant-scalar metrics")


# ----------------------------------------------------------------------------
def _perturbations():
    out = []
    for k, (c, w, a, b) in enumerate([(2.5, 0.7, 0.3, -0.5), (1.5, 0.5, 1.0, 0.0), (3.0, 1.0, 0.0, 1.0),
                                      (2.0, 0.6, -0.4, 0.4), (4.0, 0.8, 0.5, 0.5)]):
        s = P.shell(c, w)
        out.append(MS.RadialPerturbation(lambda x, s=s, a=a: a * s(x), lambda x, s=s, b=b: b * s(x)))
    return out


def test_c08_first_variations():
    t0 = time.perf_counter()
    bases = [M.make_catalog_metric("bump", {"n": 3, "amplitude": 1e-2}),
             M.make_catalog_metric("bump", {"n": 4, "amplitude": -1e-2, "center": 2.5})]
    pairs = [(g, h) for g in bases for h in _perturbations()]
    assert len(pairs) == 10
    failures, worst_s, worst_mu = [], 0.0, 0.0
    for g, h in pairs:
        ref = M.ReferenceModel(g.n)
        a, fd = MS.first_variation_S(g, h, ref)
        rel = abs(a - fd) / abs(fd)
        worst_s = max(worst_s, rel)
        if not rel < 1e-4:
            failures.append(f"dS {g.label}: {a:.8g} vs {fd:.8g}")
        a, fd = EN.first_variation_entropy(g, h, ref)
        rel = abs(a - fd) / abs(fd)
        worst_mu = max(worst_mu, rel)
        if not rel < 1e-4:
            failures.append(f"dmu {g.label}: {a:.8g} vs {fd:.8g}")
    for n in (3, 4):
        pe = M.make_catalog_metric("hyperbolic", {"n": n})
        for h in _perturbations()[:2]:
            a, _ = MS.first_variation_S(pe, h, M.ReferenceModel(n))
            b, _ = EN.first_variation_entropy(pe, h, M.ReferenceModel(n))
            if not (abs(a) < 1e-8 and abs(b) < 1e-8):
                failures.append(f"PE base n={n}: {a:.2e}, {b:.2e}")
    finish(8, "first variations", failures, time.perf_counter() - t0, 120,
           f"worst relative dS {worst_s:.1e}, dmu {worst_mu:.1e}")


# ----------------------------------------------------------------------------
def test_c09_conformal_second_variation():
    t0 = time.perf_counter()
    ref = M.ReferenceModel(3)
    tests = [P.gaussian(a, w) for a, w in ((0.05, 1.5), (0.1, 1.0), (-0.08, 2.0), (0.2, 0.8), (0.03, 3.0))]
    tests += [P.sech_power(a, k) for a, k in ((0.05, 3.0), (0.1, 4.0), (-0.05, 3.5))]
    s = P.shell(2.0, 0.8)
    tests += [lambda x, s=s: 0.1 * s(x), lambda x, s=s: -0.2 * s(x)]
    failures, worst = [], 0.0
    for k, v in enumerate(tests):
        rep = EN.conformal_second_variation(ref, v, finite_diff=k < 3)
        if not rep.analytic <= rep.bound + 1e-12 * abs(rep.bound):
            failures.append(f"v{k}: {rep.analytic:.6g} above bound {rep.bound:.6g}")
        if k < 3:
            rel = abs(rep.analytic - rep.finite_diff) / abs(rep.finite_diff)
            worst = max(worst, rel)
            if not rel < 1e-2:
                failures.append(f"v{k}: analytic {rep.analytic:.8g} vs FD {rep.finite_diff:.8g}")
    finish(9, "conformal second variation", failures, time.perf_counter() - t0, 120,
           f"{len(tests)} bounds, worst FD relative {worst:.1e}")


# ----------------------------------------------------------------------------
def test_c10_flow_monotonicity():
    t0 = time.perf_counter()
    failures = []
    g2 = M.make_catalog_metric("radial-conformal",
                               {"n": 2, "r_model": 20.0, "profile": {"kind": "gauss", "amplitude": 1e-2, "width": 1.5}})
    tr = FL.run_flow(g2, M.ReferenceModel(2), {"dt": 0.01, "t_end": 1.0, "record_every": 0.05})
    rep2 = FL.monotonicity_report(tr, 1e-7)
    if len(tr.mu_series) < 20:
        failures.append("fewer than 20 records")
    if rep2["verdict"] == "failed":
        failures.append(f"2-D mu decreased by {rep2['max_violation']:.2e}")
    u0, u1 = tr.records[0]["sup_norm"], tr.records[-1]["sup_norm"]
    if not u1 < 0.5 * u0:
        failures.append(f"2-D sup|u| {u0:.2e} -> {u1:.2e}")
    g3 = M.make_catalog_metric("bump", {"n": 3, "amplitude": 1e-2, "r_model": 20.0})
    tr3 = FL.run_flow(g3, M.ReferenceModel(3), {"dt": 0.005, "t_end": 0.3, "record_every": 0.03})
    rep3 = FL.monotonicity_report(tr3, 1e-5)
    if rep3["verdict"] == "failed":
        failures.append(f"n=3 mu decreased by {rep3['max_violation']:.2e}")
    hyp = M.make_catalog_metric("hyperbolic", {"n": 3, "r_model": 20.0})
    sys_h = FL.FlowSystem(hyp)
    _, U, _ = FL.integrate(sys_h, 0.01, 0.3)
    m = sys_h.grid.size
    r = sys_h.grid.r
    s = np.exp(sys_h.wg.S * U[m:]) * np.sinh(r)
    drift = float(np.max(np.abs(s - np.sinh(r)) / np.maximum(1.0, np.sinh(r))))
    drift = max(drift, float(np.max(np.abs(sys_h.wg.S * U[:m]))))
    if not drift < 1e-8:
        failures.append(f"hyperbolic drift {drift:.2e}")
    finish(10, "flow monotonicity", failures, time.perf_counter() - t0, 600,
           f"2-D: {rep2['verdict']}, sup|u| {u0:.1e} -> {u1:.1e}; n=3: {rep3['verdict']}; fixed-point drift {drift:.1e}")


# ----------------------------------------------------------------------------
def test_c11_gauge_invariance_and_additivity():
    t0 = time.perf_counter()
    failures = []
    entries = [
        M.make_catalog_metric("bump", {"n": 3, "amplitude": 1e-2}),
        M.make_catalog_metric("bump", {"n": 4, "amplitude": -1e-2, "center": 2.5}),
        M.make_catalog_metric("bump", {"n": 2, "amplitude": 5e-2, "center": 2.5}),
        M.make_catalog_metric("radial-conformal", {"n": 3, "profile": {"kind": "sech", "amplitude": 1e-2, "power": 2.5}}),
        M.make_catalog_metric("hyperbolic", {"n": 3}),
    ]
    worst = 0.0
    for g in entries:
        ref = M.ReferenceModel(g.n)
        base = MS.volume_renormalized_mass(g, ref)
        for delta in (0.05, -0.1):
            moved = MS.volume_renormalized_mass(M.radial_shift(g, delta), ref)
            change = abs(moved.m_vr - base.m_vr)
            allowed = max(base.err_estimate, moved.err_estimate)
            worst = max(worst, change / allowed)
            if not change <= allowed:
                failures.append(f"{g.label} shift {delta}: change {change:.2e} > {allowed:.2e}")
    triples = [
        (M.make_catalog_metric("bump", {"n": 3, "amplitude": 1e-2}),
         M.make_catalog_metric("bump", {"n": 3, "amplitude": -1e-2, "center": 2.0}), M.ReferenceModel(3)),
        (M.make_catalog_metric("bump", {"n": 3, "amplitude": 2e-2, "center": 2.5}),
         M.make_catalog_metric("bump", {"n": 3, "amplitude": 1e-2}), M.ReferenceModel(3)),
        (M.make_catalog_metric("bump", {"n": 4, "amplitude": 1e-2, "center": 2.5}),
         M.make_catalog_metric("bump", {"n": 4, "amplitude": -5e-3}), M.ReferenceModel(4)),
    ]
    worst_add = 0.0
    for g, mid, ref in triples:
        gap = MS.check_additivity(g, mid, ref)
        worst_add = max(worst_add, gap)
        if not gap < 1e-6:
            failures.append(f"additivity {g.label} / {mid.label}: {gap:.2e}")
    finish(11, "gauge invariance and additivity", failures, time.perf_counter() - t0, 60,
           f"worst shift change / err_estimate {worst:.2f}, worst additivity gap {worst_add:.1e}")
