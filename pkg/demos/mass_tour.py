"""Mass of a few catalog metrics, with its decomposition and the 2-D topological check."""
import math

from ahrenorm import ReferenceModel, make_catalog_metric, volume_renormalized_mass
from ahrenorm.mass import mass_identity_2d

CASES = [
    ("hyperbolic", {"n": 3}),
    ("bump", {"n": 3, "amplitude": 1e-2}),
    ("bump", {"n": 4, "amplitude": -1e-2, "center": 2.5}),
    ("radial-conformal", {"n": 3, "profile": {"kind": "sech", "amplitude": 5e-2, "power": 2.3}}),
    ("radial-conformal", {"n": 3, "profile": {"kind": "sech", "amplitude": 1e-2, "power": 1.5}}),
]


def main():
    print(f"{'metric':<46}{'m_vr':>16}{'err':>11}{'S':>14}  flags")
    for name, params in CASES:
        g = make_catalog_metric(name, params)
        rep = volume_renormalized_mass(g, ReferenceModel(g.n))
        print(f"{g.label[:45]:<46}{rep.m_vr:>16.9g}{rep.err_estimate:>11.2e}{rep.s_action:>14.6g}  {','.join(rep.flags)}")

    # in two dimensions the mass is fixed by the total curvature
    g = make_catalog_metric("conic2d", {"omega": math.pi, "core_power": 1.5})
    rep = volume_renormalized_mass(g, ReferenceModel(2, 0.5))
    print(f"\nconic core, omega = pi: S = {rep.s_action:.10f} (2 pi = {2 * math.pi:.10f})")
    g = make_catalog_metric("radial-conformal", {"n": 2, "profile": {"kind": "gauss", "amplitude": 0.03}})
    lhs, rhs = mass_identity_2d(g, 2 * math.pi)
    print(f"gaussian 2-D factor: m + 2(2 pi - omega) = {lhs:.3e}, int (scal + 2) dV = {rhs:.3e}")


if __name__ == "__main__":
    main()
