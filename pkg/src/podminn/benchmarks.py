"""Parametrized forcing families and FOM snapshot generation.

Two benchmarks are provided, both with 24 coefficients drawn from U[-1, 1]:

``continuous`` (id 1)
    ``f(x, y) = p(x) p(y)`` with ``p(z) = sum_{k=1}^{6} a_k^z sin(k pi z) + b_k^z cos(k pi z)``.
    Parameter layout: ``[a^x_1..6, b^x_1..6, a^y_1..6, b^y_1..6]``.

``separated`` (id 2)
    ``f = p_L(x) p_L(y) + p_H(x) p_H(y)`` with ``p_L`` over ``k = 1, 2`` and
    ``p_H`` over ``k = 5..8``. Parameter layout:
    ``[a^x_1..2, b^x_1..2, a^y_1..2, b^y_1..2, ã^x_5..8, b̃^x_5..8, ã^y_5..8, b̃^y_5..8]``.
"""

from dataclasses import dataclass, field

import numpy as np

from .fem import PoissonSolver, SolverConvergenceError

N_PARAMS = 24


@dataclass(frozen=True)
class Benchmark:
    id: int
    name: str
    # each block is (frequencies, offset of the first coefficient)
    blocks: tuple

    def param_names(self):
        names = []
        for freqs, _ in self.blocks:
            for z in ("x", "y"):
                names += [f"alpha_{k}_{z}" for k in freqs]
                names += [f"beta_{k}_{z}" for k in freqs]
        if self.id == 2:
            # high-frequency block carries tilde coefficients
            names = names[:8] + ["t" + n for n in names[8:]]
        return names

    @property
    def n_modes(self):
        return sum((2 * len(freqs)) ** 2 for freqs, _ in self.blocks)


CONTINUOUS = Benchmark(1, "continuous", ((tuple(range(1, 7)), 0),))
SEPARATED = Benchmark(2, "separated", (((1, 2), 0), ((5, 6, 7, 8), 8)))
_BENCHMARKS = {1: CONTINUOUS, 2: SEPARATED, "continuous": CONTINUOUS, "separated": SEPARATED}


def get_benchmark(benchmark_id):
    if isinstance(benchmark_id, Benchmark):
        return benchmark_id
    try:
        return _BENCHMARKS[benchmark_id]
    except (KeyError, TypeError):
        pass
    try:
        return _BENCHMARKS[int(benchmark_id)]
    except (KeyError, ValueError, TypeError):
        raise ValueError(f"unknown benchmark {benchmark_id!r}; expected 1, 2, "
                         "'continuous' or 'separated'") from None


def _trig_sum(coeffs_sin, coeffs_cos, freqs, z):
    kz = np.pi * np.outer(z, freqs)
    return np.sin(kz) @ coeffs_sin + np.cos(kz) @ coeffs_cos


def _block_product(params, freqs, offset, points):
    nk = len(freqs)
    c = params[offset:offset + 4 * nk]
    px = _trig_sum(c[0:nk], c[nk:2 * nk], freqs, points[:, 0])
    py = _trig_sum(c[2 * nk:3 * nk], c[3 * nk:4 * nk], freqs, points[:, 1])
    return px * py


def _check_params(params):
    params = np.asarray(params, dtype=float)
    if params.shape != (N_PARAMS,):
        raise ValueError(f"expected {N_PARAMS} coefficients, got shape {params.shape}")
    return params


def forcing(benchmark_id, params, points):
    """Evaluate the forcing of benchmark ``benchmark_id`` at ``points``."""
    bench = get_benchmark(benchmark_id)
    params = _check_params(params)
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    return sum(_block_product(params, freqs, off, points) for freqs, off in bench.blocks)


def forcing_continuous(params, points):
    return forcing(CONTINUOUS, params, points)


def forcing_separated(params, points):
    return forcing(SEPARATED, params, points)


def sample_params(benchmark_id, rng_seed, count):
    """Draw ``count`` coefficient vectors uniformly from [-1, 1]^24.

    Returns an array of shape ``(count, 24)``; deterministic in ``rng_seed``.
    """
    get_benchmark(benchmark_id)
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(rng_seed)
    return rng.uniform(-1.0, 1.0, size=(int(count), N_PARAMS))


@dataclass(eq=False)
class SnapshotMatrix:
    """FOM solutions stored column-wise with their parameters and inputs.

    ``columns`` has shape ``(N_h, N)``; ``micro_inputs`` holds the nodal
    forcing values with the same shape; ``param_records`` is ``(N, 24)``.
    """

    benchmark_id: int
    columns: np.ndarray = field(repr=False)
    param_records: np.ndarray = field(repr=False)
    micro_inputs: np.ndarray = field(repr=False)
    seed: int = 0

    @property
    def dof_count(self):
        return self.columns.shape[0]

    @property
    def sample_count(self):
        return self.columns.shape[1]


def nodal_forcings(benchmark_id, params, points):
    """Forcing values for each parameter row, as columns of an (N_h, N) array."""
    params = np.atleast_2d(params)
    return np.column_stack([forcing(benchmark_id, p, points) for p in params])


def generate_snapshots(benchmark_id, space, rng_seed, count, chunk_size=250):
    """Sample parameters and solve the FOM for each of them."""
    bench = get_benchmark(benchmark_id)
    params = sample_params(bench.id, rng_seed, count)
    f = nodal_forcings(bench.id, params, space.mesh.nodes)
    solver = PoissonSolver(space)
    u = np.empty_like(f)
    for start in range(0, count, chunk_size):
        stop = min(start + chunk_size, count)
        try:
            u[:, start:stop] = solver.solve(f[:, start:stop])
        except SolverConvergenceError as exc:
            index = start + (exc.column or 0)
            raise SolverConvergenceError(f"snapshot {index}: {exc}", column=index) from exc
    return SnapshotMatrix(bench.id, u, params, f, seed=rng_seed)
