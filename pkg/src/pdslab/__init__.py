"""pdslab: a numerical laboratory for constant-step perturbed dynamics.

Simulates recursions x' = P(f(x) + gamma * e(x, y)) with fixed step size,
estimates their invariant measures by ergodic averaging, and runs the
localization / exclusion experiments that show where those measures
concentrate as gamma shrinks.
"""

from .dynamics import (BlowUpError, NoiseModel, SimKernel, SystemSpec,
                       Trajectory, degenerate_noise, gaussian_noise,
                       simulate, step, transition_mean, two_point_noise,
                       uniform_noise)
from .equilibria import (FixedPointReport, classify, find_fixed_points,
                         fixed_point_report, iterated_form_curve,
                         lemma_probe, noise_excitation, saddle_gap,
                         unstable_projector)
from .lyapunov import (LyapunovSpec, SmoothReparam, TestFunction,
                       build_reparam, build_symmetric_pair_test_function,
                       build_test_function, discontinuity_avoidance,
                       drift_check, expansion_lhs, expansion_rhs,
                       lyapunov_from_scalar)
from .measures import (EmpiricalMeasure, EstimationOptions,
                       estimate_invariant, integrate, invariance_defect,
                       load_measure, localization_report, mass_in_ball,
                       moment_curve, save_measure, weak_distance)
from .models import (ModelCard, flow_map, make_contracting_borel,
                     make_coordination_game, make_double_well,
                     make_lemniscate, make_model, make_quartic_saddle,
                     make_tent_map)
from .quantizer import (SourceLaw, centroid_1d, distortion_1d,
                        distortion_md, lemma_a1_oracle, lemma_a2_oracle,
                        lloyd_map_1d, lloyd_map_md, perturbed_lloyd_card,
                        triangular_law, uniform_box_law, uniform_law,
                        voronoi_assign)

__version__ = "0.1.0"
