"""Non-intrusive reduced order models with mesh-informed neural networks.

The package covers a P1 finite element Poisson solver, two parametrized
benchmark problems, POD, sparse mesh-informed networks with hand-written
backpropagation, L-BFGS/Adam training, and POD-MINN models with an optional
closure correction.
"""

from .benchmarks import SnapshotMatrix, generate_snapshots, get_benchmark, sample_params
from .fem import P1Space, PoissonSolver, SolverConvergenceError, solve_poisson
from .mesh import StructuredTriMesh, build_unit_square_mesh
from .minn import (Dense, FactoredBatch, MeshInformed, Network, build_sparsity, init_closure,
                   init_glorot, load_network, save_network)
from .pod import POD, ReducedBasis, compute_pod, project, projection_error, reconstruct
from .rom import (FactorizedHead, PODMINNPlusRegressor, PODMINNRegressor, RomModel,
                  build_benchmark_closure_net, build_benchmark_coeff_net, combine_factorized,
                  evaluate_errors, predict, train_closure, train_pod_minn)
from .training import DataSplit, TrainConfig, make_split, minimize

__version__ = "0.1.0"

__all__ = [
    "POD", "DataSplit", "Dense", "FactoredBatch", "FactorizedHead", "MeshInformed", "Network",
    "P1Space", "PODMINNPlusRegressor", "PODMINNRegressor", "PoissonSolver", "ReducedBasis",
    "RomModel", "SnapshotMatrix", "SolverConvergenceError", "StructuredTriMesh", "TrainConfig",
    "build_benchmark_closure_net", "build_benchmark_coeff_net", "build_sparsity",
    "build_unit_square_mesh", "combine_factorized", "compute_pod", "evaluate_errors",
    "generate_snapshots", "get_benchmark", "init_closure", "init_glorot", "load_network",
    "make_split", "minimize", "predict", "project", "projection_error", "reconstruct",
    "sample_params", "save_network", "solve_poisson", "train_closure", "train_pod_minn",
]
