"""Mass, renormalized action and expander entropy of rotationally symmetric
asymptotically hyperbolic metrics, with normalized Ricci flow diagnostics."""

from .metric import (MetricError, RadialMetric, ReferenceModel, make_catalog_metric, regauge_arclength,
                     align_to_reference, scalar_curvature, einstein_deviation)
from .mass import MassReport, RadialPerturbation, volume_renormalized_mass, eh_action, first_variation_S
from .conformal import yamabe_normalize, conformal_mass, conformal_pmt_check, gap_function_F
from .entropy import solve_entropy_minimizer, G_function, first_variation_entropy, conformal_second_variation
from .flow import run_flow, monotonicity_report, FlowBlowUp

__version__ = "0.1.0"
