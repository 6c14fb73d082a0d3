"""Entropy minimizers of small bumps sit between minus the mass and the action."""
from ahrenorm import ReferenceModel, make_catalog_metric, solve_entropy_minimizer


def main():
    print(f"{'amplitude':>10}{'-m':>14}{'mu':>14}{'S':>14}{'residual':>11}{'decay':>8}")
    for amp in (-2e-2, -5e-3, 5e-3, 2e-2):
        g = make_catalog_metric("bump", {"n": 3, "amplitude": amp})
        sol = solve_entropy_minimizer(g, ReferenceModel(3))
        rep = sol.mass_report
        print(f"{amp:>10.0e}{-rep.m_vr:>14.6g}{sol.mu:>14.6g}{sol.s_action_used:>14.6g}"
              f"{sol.residual_norm:>11.1e}{sol.decay_fit.rate:>8.3f}")


if __name__ == "__main__":
    main()
