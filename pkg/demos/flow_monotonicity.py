"""Normalized Ricci flow of a 2-D conformal bump: the entropy never decreases."""
from ahrenorm import ReferenceModel, make_catalog_metric, monotonicity_report, run_flow


def main():
    g = make_catalog_metric("radial-conformal", {"n": 2, "r_model": 14.0,
                                                 "profile": {"kind": "gauss", "amplitude": 0.05, "width": 1.5}})
    trace = run_flow(g, ReferenceModel(2), {"dt": 0.05, "t_end": 1.0, "record_every": 0.2}, nodes=64)
    print(f"{'t':>5}{'mu':>15}{'mass':>15}{'min scal':>12}{'sup|u|':>11}")
    for rec in trace.records:
        print(f"{rec['t']:>5.1f}{rec['mu']:>15.6e}{rec['mass']:>15.6e}{rec['min_scal']:>12.6f}{rec['sup_norm']:>11.3e}")
    print(monotonicity_report(trace))


if __name__ == "__main__":
    main()
