"""Periodic measure solutions of nonlocal continuity equations on the circle.

Quantile-grid optimal transport, Winfree/Kuramoto flux models, invariant
envelopes, characteristic-flow integration and Poincare-map orbit search.
"""
from .bounds import BoundProfiles, check_conditions, compute_profiles, feasibility
from .dynamics import IntegratorOptions, Trajectory, simulate, step
from .flux import FluxConstants, FluxModel, constants_report, lower_bound_A, sync_integral
from .graph import GraphState, evolve_graph, find_periodic_graph, graph_to_kernel
from .measures import (FrequencyMarginal, QuantileKernel, band_kernel, barycenter,
                       dirac_kernel, graph_kernel, load_state, save_state)
from .ot1d import QuantileVector, d1_kernel, d2_kernel, geodesic, kernel_geodesic, w1, w2
from .poincare import (FixedPointResult, certify_periodic, find_periodic, first_return,
                       initial_guess, poincare_map)

__version__ = "0.1.0"
