"""Reversal of open quantum dynamics and its semiclassical phase-space counterpart.

Modules
-------
operators, lindblad, petz
    Dense operator algebra, Lindblad integration and Petz reversal.
symbols, phase_space
    Polynomial symbols, Wigner/Weyl transforms and Moyal products on grids.
semiclassical
    Drift, diffusion, scores and reversed coefficients.
kinetic
    Fokker–Planck solvers, Langevin ensembles and the Bayes check.
scenarios, config, experiments, cli
    Shipped scenarios, configuration files and reproducible drivers.
"""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .operators import (HilbertSpace, anticommutator, commutator, dagger, expectation, hermitian_inv,  # noqa: F401
                        hermitian_sqrt, pure_state, thermal_state, trace_distance)
from .lindblad import LindbladModel, StateTrajectory, integrate_forward  # noqa: F401
from .petz import build_reference, integrate_reversed, recovery_error, reverse_model  # noqa: F401
from .symbols import Jet, Symbol  # noqa: F401
from .phase_space import (Field, PhaseGrid, moyal_star, phase_space_trace, poisson_bracket,  # noqa: F401
                          weyl_quantize, wigner_function, wigner_transform)
from .semiclassical import (diffusion_coefficients, drift_coefficients, drift_diffusion, fp_rhs,  # noqa: F401
                            lindblad_wigner_rhs, psd_min_eigenvalue, reverse_drift, reversed_symbols, score_field,
                            two_route_reverse_drift_residual)
from .kinetic import (DistributionField, Ensemble, SdeModel, bayes_transition_check, density_estimate,  # noqa: F401
                      euler_maruyama, integrate_fp, integrate_reverse_fp, noise_factor, reverse_sde)
from .config import ScenarioConfig, parse_config, serialize_config  # noqa: F401
from .experiments import correspondence_report, hbar_sweep, run_scenario  # noqa: F401
