"""Neural Poisson solvers with adaptive quadrature on linear-region meshes.

The training loss of a small feed-forward network (strong residual or
Nitsche weak energy) is integrated with Gaussian rules on the mesh of
linear regions induced by a piecewise-linear surrogate of the activation,
instead of Monte-Carlo sampling.
"""

from .activation import (DEFAULT_EPSILON, SmoothActivation, abse, erf_relu,
                         lncosh_relu, make_activation, tanh_activation)
from .cpwl import (CPWLFunction, best_l2_fit, build_cpwl,
                   equidistribute_points, l2_distance, tangent,
                   tangent_intersection)
from .geometry import (ConvexPolygon, Segment1D, SimplePolygon, clip_line,
                       ear_clip, merge_adjacent, segment_intersection,
                       split_convex)
from .loss import (AQBackend, MCBackend, PointSet, PoissonProblem,
                   make_backend, manufactured, mc_sample,
                   problem_from_expressions, relative_l2_error,
                   strong_energy, two_rhombi, weak_energy)
from .mesh import (AdaptedMesh, ConvexDomain, LinearRegion, adaptive_mesh,
                   boundary_mesh, cut_region_1d, cut_region_2d,
                   merge_small_cells, quadrature_ready_cells)
from .net import (AdamState, JetEvaluation, NetworkParams, adam_init,
                  adam_step, forward_cpwl, forward_jet, forward_jet_batch,
                  forward_value, init_params, loss_gradient, param_count)
from .quadrature import QuadratureRule, integrate, map_rule, rule
from .trainer import RunRecord, StudySummary, TrainConfig, study, train

__version__ = "0.1.0"
