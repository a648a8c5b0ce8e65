"""Hellinger-Kantorovich geometry through its cone representation.

Discrete LET solver, cone geometry with closed-form parallel transport,
HK log/exp maps, isometric cone lifts, and approximate HK parallel transport.
"""

from types import ModuleType as _ModuleType

from .cone import (ConeGeodesic, ConeTangentVec, cone_covariant_derivative, cone_distance,
                   cone_exp, cone_geodesic_point, cone_log, cone_norm, cone_parallel_transport,
                   cone_pt_ode_oracle, make_geodesic)
from .errors import (ApexAtom, ApexBase, ApexEndpoint, AtomMismatch, DiameterViolation,
                     DimensionMismatch, EmptyMeasure, HKError, NegativeRatio, NoFeasiblePair,
                     NonConvergence, RadialUnderflow, SingularPartDetected, ZeroIncomingMass,
                     ZeroMarginal)
from .hk_maps import HKTangent, hk_exp, hk_log, hk_norm, load_tangent_csv, save_tangent_csv
from .let_solver import (Coupling, LetSolution, SolverConfig, barycentric_map, cost_matrix,
                         density_factors, ground_cost, hk_distance, let_objective, solve_let)
from .lifting import (ConeTangentField, LiftedPath, cone_wasserstein, field_norm, hk_interpolate,
                      isometric_lift, let_lift, lift_tangent, project_tangent)
from .measures import (ConeMeasure, ConePoint, DiscreteMeasure, load_cone_csv, load_measure_csv,
                       merge_atoms, project_measure, rescale_to_diameter, save_cone_csv,
                       save_measure_csv, support_diameter, total_mass)
from .transport import TransportResult, hk_parallel_transport, transport_convergence_study

__version__ = "0.1.0"

__all__ = [name for name, value in list(globals().items())
           if not name.startswith("_") and not isinstance(value, _ModuleType)]
