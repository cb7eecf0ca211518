"""Ejection-collision orbits of the restricted three-body and Hill problems."""

from importlib.metadata import PackageNotFoundError, version as _version

try:
    __version__ = _version("ecorbits")
except PackageNotFoundError:  # source tree without installation
    __version__ = "0.1.0"

from .analytic import (fundamental_matrix_kepler, kepler_lc_ejection, momentum_series,
                       predicted_roots, series_state, tau_star_series)
from .continuation import (BifurcationEvent, BifurcationResult, ContinuationConfig,
                           FamilyBranch, ResolutionError, continue_families, continue_family,
                           detect_bifurcations, diagram)
from .dynamics import DomainError, Params, cl1, jacobi_synodic, omega
from .ecfinder import (CertificationError, ECOrbit, FinderConfig, MomentumSample,
                       certify_collision, find_roots, momentum_at_nth_min, scan)
from .hill import HillParams, K_L, detect_periodic_ec, hill_find_ec, hill_k_hat
from .integrator import IntegrationError, IntegratorConfig, propagate, propagate_to_nth_min

__all__ = [
    "__version__",
    "BifurcationEvent", "BifurcationResult", "CertificationError", "ContinuationConfig",
    "DomainError", "ECOrbit", "FamilyBranch", "FinderConfig", "HillParams", "IntegrationError",
    "IntegratorConfig", "K_L", "MomentumSample", "Params", "ResolutionError",
    "certify_collision", "cl1", "continue_families", "continue_family", "detect_bifurcations",
    "detect_periodic_ec", "diagram", "find_roots", "fundamental_matrix_kepler",
    "hill_find_ec", "hill_k_hat", "jacobi_synodic", "kepler_lc_ejection", "momentum_at_nth_min",
    "momentum_series", "omega", "predicted_roots", "propagate", "propagate_to_nth_min", "scan",
    "series_state", "tau_star_series",
]
