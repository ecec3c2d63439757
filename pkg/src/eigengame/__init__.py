"""Streaming top-k eigendecomposition with unbiased EigenGame updates."""
from .errors import (ConfigError, ConvergenceError, DegenerateStepError, DomainError, EigenGameError,
                     ParseError, RankError, ShapeError, SingularPenaltyError)
from .linalg import SymEig, jacobi_eigh, orthonormalize, random_orthogonal, retract, tangent_project
from .updates import (Constraint, CovView, EigenState, UpdateRule, alpha_update, alpha_utility, gha_update,
                      mu_best_response, mu_grad_update, mu_update, mu_utility)
from .data_io import Dataset, Spectrum, load_edges, load_matrix, sample_batch, save_matrix, synth_covariance
from .metrics import Labeling, angular_error, kmeans, longest_streak, subspace_distance, v_measure
from .solver import Schedule, SolverConfig, aggregate_shards, apply_update, init_state, run, step_size
from .graph import EdgeList, LambdaTracker, incidence_apply, incidence_t_apply, laplacian, run_graph

__version__ = "0.1.0"
