"""Frequency dynamics of power systems with synchronous generators and
grid-following converters: network reduction, linearized converter
equivalents, COI-frame models and baselines."""
from ._accel import HAVE_NUMBA, backend
from .gfl import (GflEquivalent, GflLinearModel, GflOperatingPoint, GflParams,
                  LinearizationCoeffs, assemble_transfer_functions, extract_equivalents,
                  gfl_equivalent, linearization_coefficients, nonlinear_gfl_derivatives,
                  realize_linear_model, solve_operating_point)
from .network import (Branch, CoiInterfaceMatrix, HybridInterfaceMatrix, NetworkCase,
                      PartitionedAdmittance, Phasor, ReducedAdmittance,
                      build_partitioned_admittance, coi_frame_reduction,
                      eliminate_network_nodes, form_hybrid_matrix)
from .sg import CoiParams, GovernorParams, SgParams, aggregate_coi, swing_derivatives

__version__ = "0.1.0"
