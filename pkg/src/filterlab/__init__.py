"""Monte Carlo laboratory for Euler-discretized continuous-time filtering.

The library simulates the coupled signal/observation system, estimates the
unnormalized and normalized filters by Girsanov-weighted particle averages,
and empirically verifies the asymptotic behavior of the discretization
error: the O(1/sqrt(n)) strong rate, the mixed-normal law of the rescaled
error with its conditional-variance representation, and the underlying
double-stochastic-integral limit theorems.
"""

from .lattice import (BrownianLattice, ConfigurationError, LevelError,
                      coarsen, eta, sample_lattice)
from .models import (FilterModel, TestFunction, get_model, get_test_function,
                     list_models, list_test_functions)
from .euler import (EulerTrajectory, IntegrationError, integrate_euler,
                    integrate_reference, simulate_observation)
from .girsanov import (ErrorSample, EstimationError, ParticleEstimate,
                       SchemeTag, WeightScheme, error_sample, log_weight,
                       normalized_error_sample, normalized_estimate,
                       rho_estimate)
from .tangent import (TangentFlow, VarianceEstimate, compute_tangent_flow,
                      f_coeff, h_sensitivity, inverse_flow, mu_estimate,
                      tangent_step, u_estimate_scheme_I, u_estimate_scheme_II,
                      variation_of_constants_check)
from .kalman import kalman_filter
from .limits import (FubiniCase, TestCase31, ZeroCase,
                     conditional_double_integral, double_integral,
                     fubini_check, get_case, get_fubini_case, get_zero_case,
                     list_cases, list_fubini_cases, list_zero_cases,
                     qv_limit_check, qv_statistic, zero_limit_check)
from .stats import (RateFit, SampleSet, Verdict, ks_test,
                    mixed_normal_prediction, moment_check, rate_regression,
                    standard_normal_cdf, standardize_mixed_normal,
                    weighted_limit_check)
from .experiments import PathResult, path_sample, rate_ladder_sample
from .runner import ExperimentConfig, ExperimentReport, emit_plotdata, \
    parse_config, run

__version__ = "0.1.0"
