"""Simulation, certification, and stress-testing of stochastic recursions
driven by biased oracles, together with their continuous-time limit dynamics.
"""

from .core import (DomainError, RangeError, RandomSource, StepSchedule, Trace,
                   TraceBuilder, clock, interpolate, robbins_monro_verdict,
                   schedule_value)
from .dynamics import (ContinuousTrajectory, DivergenceError,
                       FiniteHorizonCertificate, InclusionSpec, apt_deviation,
                       finite_horizon_certificate, integrate, martingale_tail,
                       solution_growth_bound)
from .geometry import (ConvexSet, TruncatedNormalCone, normal_cone_project,
                       project, tangent_cone_project,
                       truncated_normal_membership)
from .harness import (ConfigError, ExperimentConfig, ExperimentResult,
                      RunSummary, acceptance_checks, fig1_config, fig2_config,
                      is_u_shaped, monitor, run_experiment,
                      run_projected_subgrad, run_sri, run_zo_sgd,
                      sri_membership, sri_residuals, ushape_config)
from .oracles import (BiasModel, BiasedSubgradOracle, NoiseSpec, ZoEstimatorConfig,
                      ZoOracle, biased_subgradient, fit_bias_model, measure_bias,
                      measure_second_moment, query_value, zo_gradient)
from .problems import (CapabilityError, Problem, f1_problem, f2_problem,
                       get_problem, l1_problem, linear_problem,
                       quadratic_problem, sphere_problem)

__version__ = "0.1.0"
