"""Attraction-based extraction and tracking of hyperbolic LCS in 2-D flows.

One forward grid integration yields the flow map and its gradient; the SVD
of the gradient provides forward and backward stretch fields from that
single run.  Short segments seeded at singular-value extrema are then
advected in the attracting time direction of each family, which tracks
both attracting and repelling structures stably at any time inside the
analysis window.
"""

from .velocity import (VelocityField, duffing_field, zero_field,
                       linear_saddle_field, builtin_field, eval_velocity,
                       gridded_field, load_gridded_field, save_gridded_field)
from .flow_map import (FlowMapGrid, GridSpec, advect_point, advect_points,
                       compute_flow_map_grid, deformation_gradient_aux,
                       deformation_gradient_main,
                       deformation_gradient_at_points,
                       load_flow_map, save_flow_map)
from .svd_analysis import (SvdFields, analyze, ftle, ftle_at_points,
                           load_svd_fields, save_svd_fields, svd2x2)
from .seeding import (SeedPoint, filter_extrema, local_maxima,
                      make_seed_segments, select_seeds)
from .lcs_tracking import (MaterialCurve, RefineParams, advect_curve,
                           extract_attracting_lcs, extract_repelling_lcs)
from .shrinkline import (LineFieldCurve, compare_curves, hausdorff_distance,
                         integrate_line_field, shrink_lines_through_seeds)
from .ns_solver import (SpectralState, TurbulenceConfig, generate_turbulence,
                        random_forcing, step_vorticity)

__version__ = "0.1.0"
