"""Simulation toolkit for translation-invariant matchings of point processes.

Samples Poisson point sets on a torus or box, builds matchings under several
schemes (stable, hierarchical, adjacent, forest-derived, minimum-length),
measures the tail of the typical matching distance, and solves the stable
matching tail-exponent equation numerically.
"""

from .geometry import (BLUE, RED, ColoredPointSet, Domain, add_palm_point,
                       check_general_position, merge, pairwise_distances,
                       read_points_csv, sample_binomial, sample_poisson,
                       write_points_csv)
from .grid import SpatialIndex, build_index
from .stable import (Matching, MatchingError, ONE_COLOR, TWO_COLOR,
                     find_unstable_pair, match_radii_timeline,
                     read_matching_csv, stable_match, write_matching_csv)
from .oracles import (CapabilityError, brute_force_stable, min_length_bipartite,
                      min_length_one_color_exact, min_length_one_color_greedy)
from .constructions import (DyadicShifts, Forest, LevelStats, adjacent_match_1d,
                            cone_forest, hierarchical_match, k_box_id,
                            match_from_forest, minimal_spanning_forest,
                            read_forest_csv, write_forest_csv)
from .analysis import (CheckResult, InvariantReport, PowerLawFit, TailEstimate,
                       default_fit_window, empirical_survival, fit_power_law,
                       invariant_report, ks_exponential, match_distances)
from .exponent import (SolveResult, kernel_g, kernel_integral, phi,
                       s_asymptotics_table, solve_s, sphere_area)
from .svg import render_matching, render_survival

__version__ = "0.1.0"
