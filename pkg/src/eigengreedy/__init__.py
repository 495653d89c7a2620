"""Certified two-stage greedy reduced models for the smallest eigenpairs of parametric Hermitian matrices."""

from .affine import AffineFamily, ParameterGrid, ThetaTerm, chebyshev_grid, load_grid, load_model, save_grid, save_model
from .eigensolve import cluster, dense_eig, lowest_clusters, smallest_k
from .gap_cert import check_dim_condition, conditional_certify_online, gap_bounds
from .generators import blbq_family, example1_family, lagrange_rank_one_family, random_quadratic_family, xxz_family
from .greedy import GreedyConfig, delta_estimator, greedy_eigenspace, greedy_gap, verify_grid
from .lowerbounds import BoundContext, solve_lp
from .subspace import RomState, load_rom, new_state, projector_distance, save_rom

__version__ = "0.1.0"
