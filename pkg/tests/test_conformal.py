import json
import math

import numpy as np
import pytest

from ahrenorm import conformal as C
from ahrenorm import metric as M
from ahrenorm import profiles as P
from ahrenorm.jet import Jet


@pytest.mark.parametrize("n", [3, 4, 6])
def test_gap_function_closed_form_and_small_exponent_form(n):
    w = np.array([-0.3, -1e-2, 0.2])      # the closed form cancels badly for tinier w
    x = np.exp(0.5 * (n - 2) * w)
    np.testing.assert_allclose(C.gap_of_exponent(w, n), C.gap_function_F(x, n), rtol=1e-6, atol=1e-16)
    # linear and quadratic terms cancel: the expansion starts at n (n^2 - 4) w^3 / 24
    for t in (1e-4, -1e-4):
        assert C.gap_of_exponent(t, n) == pytest.approx(n * (n * n - 4) * t ** 3 / 24, rel=1e-3)


def test_gap_function_domain():
    with pytest.raises(ValueError):
        C.gap_function_F(2.0, 2)
    with pytest.raises(ValueError):
        C.gap_function_F(-1.0, 3)


@pytest.mark.parametrize("n", [3, 4])
def test_conformal_defect_matches_metric_curvature(n):
    w = P.gaussian(0.1, 1.3)
    g = M.conformal_metric(M.RadialMetric(n), w)
    r = np.linspace(0.3, 6.0, 17)
    v = w(Jet.variable(r))
    d = C.conformal_defect(n, v.v, v.d, v.dd, 1.0 / np.tanh(r))
    np.testing.assert_allclose(d, M.geometry(g, r).defect, rtol=1e-12, atol=1e-13)


def test_constant_factor_rescales_curvature():
    n, c = 4, 0.25
    d = C.conformal_defect(n, np.array([c]), np.zeros(1), np.zeros(1), np.ones(1))
    assert d[0] == pytest.approx(-n * (n - 1) * math.expm1(-2 * c), rel=1e-15)


def test_conformal_mass_of_the_reference_is_zero():
    assert C.conformal_mass(M.ReferenceModel(3), P.zero) == 0.0
    with pytest.raises(M.MetricError):
        C.conformal_mass(M.ReferenceModel(2), P.gaussian(0.1, 1.0))


def test_positive_mass_check_verdicts():
    ref = M.ReferenceModel(3)
    ok = C.conformal_pmt_check(ref, P.sech_power(1e-2, 2.5))
    assert ok["verdict"] == "pass" and ok["mass"] > 0 and ok["min_defect"] >= 0
    mixed = C.conformal_pmt_check(ref, P.gaussian(1e-2, 1.5))
    assert mixed["verdict"] == "inapplicable" and mixed["min_defect"] < 0


def test_yamabe_round_trip_recovers_the_factor():
    amp = 0.05
    g = M.make_catalog_metric("radial-conformal", {"n": 3, "profile": {"kind": "sech", "amplitude": amp, "power": 2.0}})
    sol = C.yamabe_normalize(g, M.ReferenceModel(3))
    assert sol.residual_norm < 1e-8
    r = np.linspace(0.0, 10.0, 41)
    np.testing.assert_allclose(sol.w(Jet.variable(r)).v, -amp / np.cosh(r) ** 2, atol=1e-9)
    h = sol.normalized_metric()
    rr = np.linspace(0.5, 12.0, 30)
    np.testing.assert_allclose(M.scalar_curvature(h, rr), -6.0, atol=1e-7)
    n = 3
    np.testing.assert_allclose(sol.phi_nodes, np.exp(-(n - 2) * sol.w_nodes / 2), rtol=1e-15)


def test_yamabe_on_a_bump_and_its_serialization():
    g = M.make_catalog_metric("bump", {"n": 4, "amplitude": 2e-2})
    sol = C.yamabe_normalize(g, M.ReferenceModel(4))
    assert sol.residual_norm < 1e-8 and sol.decay_fit.rate > 0
    body = json.loads(sol.to_json())
    assert len(body["w_nodes"]) == sol.grid.size


def test_yamabe_rejects_two_dimensions_and_mismatched_reference():
    with pytest.raises(M.MetricError):
        C.yamabe_normalize(M.make_catalog_metric("hyperbolic", {"n": 2}))
    with pytest.raises(M.MetricError):
        C.yamabe_normalize(M.make_catalog_metric("bump", {"n": 3}), M.ReferenceModel(4))
