import math

import numpy as np
import pytest

from ahrenorm import metric as M
from ahrenorm import profiles as P
from ahrenorm.jet import Jet


def scal_oracle(m, r, h=1e-3):
    """Scalar curvature of a dr^2 + s^2 sigma from sampled a and s by nested central differences."""
    n = m.n
    s = lambda x: m.warp(x)
    a = lambda x: m.lapse(x)
    su = lambda x: (s(x + h) - s(x - h)) / (2 * h) / a(x)
    suu = (su(r + h) - su(r - h)) / (2 * h) / a(r)
    return -2 * (n - 1) * suu / s(r) + (n - 1) * (n - 2) * (1 - su(r) ** 2) / s(r) ** 2


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_hyperbolic_has_constant_scalar_curvature(n):
    g = M.make_catalog_metric("hyperbolic", {"n": n})
    r = np.linspace(0.0, 25.0, 200)
    np.testing.assert_allclose(M.scalar_curvature(g, r), -n * (n - 1), atol=1e-12)
    E_rad, E_sph = M.einstein_deviation(g, r)
    assert np.max(np.abs(E_rad)) < 1e-12 and np.max(np.abs(E_sph)) < 1e-12


@pytest.mark.parametrize("name,params", [
    ("bump", {"n": 3, "amplitude": 5e-2}),
    ("bump", {"n": 4, "amplitude": -3e-2, "center": 2.0}),
    ("radial-conformal", {"n": 4, "profile": {"kind": "gauss", "amplitude": 0.1, "width": 1.2}}),
    ("radial-conformal", {"n": 3, "profile": {"kind": "sech", "amplitude": -0.05, "power": 3.0}}),
])
def test_scalar_curvature_matches_finite_difference_oracle(name, params):
    g = M.make_catalog_metric(name, params)
    r = np.linspace(0.5, 6.0, 23)
    np.testing.assert_allclose(M.scalar_curvature(g, r), scal_oracle(g, r), rtol=2e-6, atol=2e-6)


def test_conic_entry_and_its_regular_core():
    g = M.make_catalog_metric("conic2d", {"omega": math.pi})
    r = np.array([0.5, 2.0, 7.0])
    np.testing.assert_allclose(g.warp(r), 0.5 * np.sinh(r), rtol=1e-15)
    np.testing.assert_allclose(M.scalar_curvature(g, r), -2.0)
    core = M.make_catalog_metric("conic2d", {"omega": math.pi, "core_power": 1.5})
    assert core.warp(np.array([1e-6]))[0] == pytest.approx(1e-6, rel=1e-9)
    assert core.warp(np.array([25.0]))[0] / np.sinh(25.0) == pytest.approx(0.5, rel=1e-14)


@pytest.mark.parametrize("name,params", [
    ("nonsense", {}),
    ("conic2d", {"omega": -1.0}),
    ("conic2d", {"omega": 3.0, "core_power": 0.5}),
    ("bump", {"n": 3, "width": 0.0}),
    ("bump", {"n": 3, "amplitude": -1.5}),
    ("hyperbolic", {"n": 1}),
])
def test_catalog_rejects_bad_entries(name, params):
    with pytest.raises(M.MetricError):
        M.make_catalog_metric(name, params)


def test_reference_model_rules():
    assert M.ReferenceModel(2, 0.5).omega == pytest.approx(math.pi)
    with pytest.raises(M.MetricError):
        M.ReferenceModel(3, 0.5)
    with pytest.raises(M.MetricError):
        M.ReferenceModel(2, 0.0)


def test_domain_is_checked():
    g = M.make_catalog_metric("hyperbolic", {"n": 3, "r_model": 10.0})
    with pytest.raises(M.MetricError):
        M.scalar_curvature(g, np.array([11.0]))


def test_csv_round_trip(tmp_path):
    g = M.make_catalog_metric("radial-conformal", {"n": 3, "r_model": 12.0,
                                                   "profile": {"kind": "gauss", "amplitude": 0.05, "width": 1.5}})
    path = tmp_path / "g.csv"
    M.write_metric_csv(g, path, nodes=1200)
    h = M.read_metric_csv(path, n=3)
    r = np.linspace(0.5, 8.0, 30)
    np.testing.assert_allclose(h.warp(r), g.warp(r), rtol=1e-9)
    np.testing.assert_allclose(M.scalar_curvature(h, r), M.scalar_curvature(g, r), atol=1e-4)


def test_csv_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("r,a\n" + "\n".join(f"{i},1" for i in range(10)))
    with pytest.raises(M.MetricError, match="missing column"):
        M.read_metric_csv(p)
    p.write_text("r,a,s\n0,1,0\n1,1,1\n")
    with pytest.raises(M.MetricError, match="at least 8"):
        M.read_metric_csv(p)
    p.write_text("r,a,s\n" + "\n".join(f"{i},-1,{i}" for i in range(10)))
    with pytest.raises(M.MetricError, match="lapse"):
        M.read_metric_csv(p)


def test_arclength_regauge_preserves_geometry():
    g = M.make_catalog_metric("radial-conformal", {"n": 3, "r_model": 12.0,
                                                   "profile": {"kind": "gauss", "amplitude": 0.1, "width": 1.5}})
    h = M.regauge_arclength(g)
    assert h.arclength
    x, u = M.arclength_table(g)
    pick = (x > 0.5) & (x < 8.0)
    np.testing.assert_allclose(h.warp(u[pick]), g.warp(x[pick]), rtol=1e-9)
    np.testing.assert_allclose(M.scalar_curvature(h, u[pick]), M.scalar_curvature(g, x[pick]), atol=1e-7)


def test_radial_shift_is_a_reparametrization():
    g = M.make_catalog_metric("bump", {"n": 3, "amplitude": 5e-2, "center": 32.0, "r_model": 40.0})
    d = 0.3
    h = M.radial_shift(g, d)
    x = np.linspace(30.0, 34.0, 9)      # where the shift is complete to rounding
    np.testing.assert_allclose(M.scalar_curvature(h, x), M.scalar_curvature(g, x + d), atol=1e-10)
    np.testing.assert_allclose(h.warp(x), g.warp(x + d), rtol=1e-12)
    # everywhere: s_h(x) = s_g(x + d chi(x))
    chi, _ = P.smooth_step(4.0, 1.0)
    x = np.linspace(0.1, 20.0, 50)
    np.testing.assert_allclose(h.warp(x), g.warp(x + d * chi(Jet.variable(x)).v), rtol=1e-12)


def test_alignment_recovers_a_shift():
    g = M.make_catalog_metric("hyperbolic", {"n": 3})
    for d in (0.3, -0.2):
        al = M.align_to_reference(M.radial_shift(g, d), M.ReferenceModel(3))
        assert al.beta == pytest.approx(d, abs=1e-10)


def test_decay_fit_on_exact_exponential():
    r = np.linspace(5, 20, 40)
    fit = M.fit_decay_rate((r, 3.0 * np.exp(-2.5 * r)))
    assert fit.rate == pytest.approx(2.5, rel=1e-9)
    assert M.fit_decay_rate((r, np.zeros_like(r))).sentinel
