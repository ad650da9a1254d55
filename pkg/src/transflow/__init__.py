"""Numerical laboratory for transverse geometry, entropy and flows on
leaf-space charts of Riemannian foliations."""

from .calculus import (FoliationModel, d_b, delta_b, delta_T_kappa, delta_w, div_sym, drift_laplacian,
                       hess_b, ibp_residual, laplacian_b, nabla_oneform)
from .entropy import EntropyReport, f_T, lambda_bar, lambda_eigen, lambda_minimize, s_T_b
from .errors import (CheckpointError, ConfigError, ModeUnsupported, NoConvergence, NonPositive,
                     SingularMetric, TransflowError, UnknownScenario)
from .flow import (FlowState, MonotonicityReport, monitor, solve_conjugate_heat, step_gauged,
                   step_gradient, step_ricci)
from .geometry import CurvatureBundle, MetricField, christoffel, curvature, volume
from .grid import ChartGrid
from .scenarios import Scenario, build
from .variation import PerturbationSpec, dF_analytic, dF_numeric, dRic_analytic, dScal_analytic

__version__ = "0.1.0"
