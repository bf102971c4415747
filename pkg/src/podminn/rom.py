"""POD-MINN reduced order models: assembly, training, prediction, errors.

Arrays follow two conventions. The functional API (``train_pod_minn``,
``predict``, ``evaluate_errors``) works with snapshot matrices whose columns
are states, like :class:`~podminn.benchmarks.SnapshotMatrix`. The estimators
(:class:`PODMINNRegressor`, :class:`PODMINNPlusRegressor`) use rows as
samples.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, clone
from sklearn.utils.validation import check_is_fitted

from .mesh import build_unit_square_mesh
from .minn import Dense, MeshInformed, Network, init_closure, init_glorot
from .pod import ReducedBasis, compute_pod, vector_norm
from .training import TrainConfig, make_objective, minimize
from .validation import check_norm_order, check_samples, check_same_length

log = logging.getLogger(__name__)

SUPPORT_RADIUS = 0.6
COARSE_CELLS = 25
CLOSURE_CELLS = 35
CLOSURE_GAIN = 0.1
# closure runs are scored per 20 iterations so early stopping sees trends, not noise
CLOSURE_MAX_EPOCHS = 30
CLOSURE_ITERATIONS_PER_EPOCH = 20
# closure inputs are divided by this multiple of their training rms so that
# the first tanh layer stays close to its linear range
CLOSURE_SCALE_FACTOR = 4.0


# --- architectures ---------------------------------------------------------

def _mesh(m):
    return m if hasattr(m, "nodes") else build_unit_square_mesh(int(m))


def build_benchmark_coeff_net(n_rb, fine_mesh=50, coarse_mesh=COARSE_CELLS,
                              support_radius=SUPPORT_RADIUS, rng_seed=0):
    """Mesh-informed (tanh) layer onto a coarse grid, then a dense linear
    layer onto ``n_rb`` coefficients. Glorot-initialized.

    Meshes may be given as mesh objects or as cells per side.
    """
    fine, coarse = _mesh(fine_mesh), _mesh(coarse_mesh)
    if fine.domain_bounds != coarse.domain_bounds:
        raise ValueError("meshes must share the same domain")
    if int(n_rb) < 1:
        raise ValueError(f"n_rb must be positive, got {n_rb}")
    net = Network([MeshInformed.between(fine, coarse, support_radius, "tanh"),
                   Dense(coarse.n_nodes, int(n_rb), "identity")],
                  metadata={"role": "coefficients"})
    return init_glorot(net, rng_seed)


def build_benchmark_closure_net(fine_mesh=50, mid_mesh=CLOSURE_CELLS,
                                support_radius=SUPPORT_RADIUS, rng_seed=0,
                                gain=CLOSURE_GAIN):
    """Two mesh-informed layers, fine -> mid (tanh) -> fine (identity).

    The last layer starts at zero so the untrained closure outputs zero.
    """
    fine, mid = _mesh(fine_mesh), _mesh(mid_mesh)
    if fine.domain_bounds != mid.domain_bounds:
        raise ValueError("meshes must share the same domain")
    net = Network([MeshInformed.between(fine, mid, support_radius, "tanh"),
                   MeshInformed.between(mid, fine, support_radius, "identity")],
                  metadata={"role": "closure"})
    return init_closure(net, rng_seed, gain=gain)


# --- factorized head -------------------------------------------------------

class FactorizedHead:
    """Coefficient predictor ``u = X(mu_m) y(mu_M)``.

    Each micro branch outputs ``n_rb * k`` values read row-major as an
    ``(n_rb, k)`` matrix; with two micro branches their matrices are
    multiplied elementwise. The macro branch outputs the ``k``-vector ``y``.

    Parameters
    ----------
    micro_branches : Network or sequence of one or two Networks
    macro_branch : Network
    n_rb : int
    k : int, default 10
    """

    def __init__(self, micro_branches, macro_branch, n_rb, k=10):
        if isinstance(micro_branches, Network):
            micro_branches = [micro_branches]
        self.micro_branches = list(micro_branches)
        self.macro_branch = macro_branch
        self.n_rb, self.k = int(n_rb), int(k)
        if len(self.micro_branches) not in (1, 2):
            raise ValueError("one or two micro branches are supported")
        for net in self.micro_branches:
            if net.out_dim != self.n_rb * self.k:
                raise ValueError(f"micro branch outputs {net.out_dim} values, "
                                 f"expected n_rb*k = {self.n_rb * self.k}")
        if macro_branch.out_dim != self.k:
            raise ValueError(f"macro branch outputs {macro_branch.out_dim} values, expected k={self.k}")

    @property
    def networks(self):
        return self.micro_branches + [self.macro_branch]

    @property
    def param_count(self):
        return sum(net.param_count for net in self.networks)

    def get_params(self):
        return np.concatenate([net.get_params() for net in self.networks])

    def set_params(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.param_count,):
            raise ValueError(f"expected {self.param_count} parameters, got {theta.shape}")
        pos = 0
        for net in self.networks:
            net.set_params(theta[pos:pos + net.param_count])
            pos += net.param_count
        return self

    def _micro_inputs(self, mu_micro):
        if isinstance(mu_micro, (list, tuple)):
            if len(mu_micro) != len(self.micro_branches):
                raise ValueError(f"{len(mu_micro)} micro inputs for "
                                 f"{len(self.micro_branches)} micro branches")
            return list(mu_micro)
        return [mu_micro] * len(self.micro_branches)

    def forward(self, mu_micro, mu_macro):
        """Returns ``(coefficients, cache)``; inputs may be single samples or batches."""
        mu_macro = np.asarray(mu_macro, dtype=float)
        squeeze = mu_macro.ndim == 1
        inputs = [np.atleast_2d(np.asarray(m, dtype=float)) for m in self._micro_inputs(mu_micro)]
        mu_macro = np.atleast_2d(mu_macro)
        for net, m in zip(self.micro_branches, inputs):
            if m.shape[1] != net.in_dim:
                raise ValueError(f"micro input has {m.shape[1]} features, branch expects {net.in_dim}")
        if mu_macro.shape[1] != self.macro_branch.in_dim:
            raise ValueError(f"macro input has {mu_macro.shape[1]} features, "
                             f"branch expects {self.macro_branch.in_dim}")
        check_same_length(mu_macro, *inputs)
        n = mu_macro.shape[0]
        parts, caches = [], []
        for net, m in zip(self.micro_branches, inputs):
            out, cache = net.forward(m)
            parts.append(out.reshape(n, self.n_rb, self.k))
            caches.append(cache)
        X = parts[0] * parts[1] if len(parts) == 2 else parts[0]
        y, ycache = self.macro_branch.forward(mu_macro)
        out = np.einsum("nrk,nk->nr", X, y)
        cache = (parts, X, y, caches, ycache, squeeze)
        return (out[0] if squeeze else out), cache

    def __call__(self, mu_micro, mu_macro):
        return self.forward(mu_micro, mu_macro)[0]

    def backward(self, cache, output_gradient):
        """Flat parameter gradient, ordered like :meth:`get_params`."""
        parts, X, y, caches, ycache, squeeze = cache
        g = np.atleast_2d(np.asarray(output_gradient, dtype=float))
        dX = g[:, :, None] * y[:, None, :]
        dy = np.einsum("nrk,nr->nk", X, g)
        if len(parts) == 2:
            dparts = [dX * parts[1], dX * parts[0]]
        else:
            dparts = [dX]
        n = g.shape[0]
        flats = [net.backward(c, d.reshape(n, -1), input_gradient=False).flat()
                 for net, c, d in zip(self.micro_branches, caches, dparts)]
        flats.append(self.macro_branch.backward(ycache, dy, input_gradient=False).flat())
        return np.concatenate(flats)


def combine_factorized(head, mu_micro, mu_macro):
    """Evaluate ``X(mu_m) y(mu_M)`` for one parameter instance."""
    return head(mu_micro, mu_macro)


def fit_factorized(head, mu_micro, mu_macro, targets, config=None):
    """Fit a factorized head by minimizing the mean residual norm. In place."""
    from .training import smoothed_norms

    targets = check_samples(targets, n_features=head.n_rb, name="targets")

    def objective(theta):
        head.set_params(theta)
        out, cache = head.forward(mu_micro, mu_macro)
        R = targets - out
        norms, dR = smoothed_norms(R)
        return float(norms.mean()), head.backward(cache, -dR / R.shape[0])

    theta, history = minimize(objective, head.get_params(), config or TrainConfig())
    head.set_params(theta)
    return head, history


# --- models ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RomModel:
    """Trained reduced model.

    Attributes
    ----------
    basis : ReducedBasis
        Truncated to ``n_rb`` modes.
    coeff_net : Network or callable
        Maps scaled micro inputs (rows) to ``n_rb`` coefficients.
    closure_net : Network, optional
        Maps scaled micro inputs to a full-order correction.
    input_scale : float
        Inputs are divided by this before entering the coefficient network.
    closure_scale : float, optional
        Inputs are divided by this before entering the closure network.
        Required when ``closure_net`` is set.
    """

    basis: ReducedBasis
    coeff_net: object
    closure_net: object = None
    input_scale: float = 1.0
    benchmark_id: int = None
    metadata: dict = field(default_factory=dict)
    closure_scale: float = None

    def __post_init__(self):
        out_dim = getattr(self.coeff_net, "out_dim", self.n_rb)
        if out_dim != self.n_rb:
            raise ValueError(f"coefficient network outputs {out_dim} values, basis has {self.n_rb} modes")
        if self.closure_net is not None and self.closure_net.out_dim != self.basis.dof_count:
            raise ValueError("closure network output does not match the number of dofs")
        if not self.input_scale > 0:
            raise ValueError("input_scale must be positive")
        if self.closure_net is not None and not (self.closure_scale or 0) > 0:
            raise ValueError("a closure network needs a positive closure_scale")

    @property
    def n_rb(self):
        return self.basis.max_modes

    @property
    def V(self):
        return self.basis.basis_columns

    def with_closure(self, closure_net, closure_scale, **metadata):
        return replace(self, closure_net=closure_net, closure_scale=closure_scale,
                       metadata={**self.metadata, **metadata})

    def coefficients(self, mu_rows):
        """Reduced coefficients for micro inputs stored as rows."""
        return self.coeff_net(np.asarray(mu_rows, dtype=float) / self.input_scale)

    def closure(self, mu_rows):
        if self.closure_net is None:
            return np.zeros((np.shape(mu_rows)[0], self.basis.dof_count))
        return self.closure_net(np.asarray(mu_rows, dtype=float) / self.closure_scale)


def _rows(mu):
    mu = np.asarray(mu, dtype=float)
    if mu.ndim == 1:
        return mu[None, :], True
    if mu.ndim != 2:
        raise ValueError("inputs must be a vector or a column-wise matrix")
    return mu.T, False


def predict(model, mu_micro, closure=True):
    """Full-order prediction ``V c(mu) (+ closure(mu))``.

    ``mu_micro`` is one nodal input vector or a matrix of them as columns;
    the output has the same layout.
    """
    if model is None or model.coeff_net is None:
        raise ValueError("model is not trained")
    X, single = _rows(mu_micro)
    if X.shape[1] != model.basis.dof_count:
        raise ValueError(f"input has {X.shape[1]} entries, expected {model.basis.dof_count}")
    U = model.coefficients(X) @ model.V.T
    if closure and model.closure_net is not None:
        U = U + model.closure(X)
    return U[0] if single else U.T


def _train_config(config, closure=False):
    if config is None and closure:
        return TrainConfig(max_epochs=CLOSURE_MAX_EPOCHS,
                           iterations_per_epoch=CLOSURE_ITERATIONS_PER_EPOCH)
    if config is None:
        return TrainConfig()
    if isinstance(config, TrainConfig):
        return config
    return TrainConfig(**config)


def _input_scale(X_train):
    scale = float(np.abs(X_train).max())
    if not scale > 0:
        raise ValueError("training inputs are identically zero")
    return scale


def _closure_scale(X_train):
    return CLOSURE_SCALE_FACTOR * float(np.sqrt(np.mean(np.square(X_train))))


def fit_coeff_net(net, V, X_train, U_train, X_valid=None, U_valid=None, config=None,
                  input_scale=1.0):
    """Train ``net`` on rows ``X -> V^T u`` in place; returns the history."""
    cfg = _train_config(config)
    obj = make_objective(net, X_train / input_scale, U_train @ V)
    vobj = None
    if X_valid is not None and len(X_valid):
        vnet = net.copy()
        vfun = make_objective(vnet, X_valid / input_scale, U_valid @ V)
        vobj = lambda th: vfun(th)[0]  # noqa: E731
    theta, history = minimize(obj, net.get_params(), cfg, vobj)
    net.set_params(theta)
    return history


def fit_closure_net(net, model, X_train, U_train, X_valid=None, U_valid=None, config=None,
                    input_scale=1.0):
    """Train ``net`` in place on the residuals ``u - V c(mu)`` of ``model``."""
    cfg = _train_config(config, closure=True)
    s = input_scale
    R_train = U_train - model.coefficients(X_train) @ model.V.T
    obj = make_objective(net, X_train / s, R_train, cfg.inf_norm_term)
    vobj = None
    if X_valid is not None and len(X_valid):
        R_valid = U_valid - model.coefficients(X_valid) @ model.V.T
        vfun = make_objective(net.copy(), X_valid / s, R_valid, cfg.inf_norm_term)
        vobj = lambda th: vfun(th)[0]  # noqa: E731
    theta, history = minimize(obj, net.get_params(), cfg, vobj)
    net.set_params(theta)
    return history


def _fine_cells(n_dofs):
    c = int(round(np.sqrt(n_dofs))) - 1
    if (c + 1) ** 2 != n_dofs:
        raise ValueError(f"{n_dofs} dofs do not form a square structured grid")
    return c


def _columns(snapshots):
    U = np.asarray(getattr(snapshots, "columns", snapshots), dtype=float)
    X = np.asarray(getattr(snapshots, "micro_inputs", U), dtype=float)
    if U.shape != X.shape:
        raise ValueError(f"snapshots {U.shape} and micro inputs {X.shape} differ in shape")
    return U, X


def train_pod_minn(snapshots, split, n_rb, config=None, basis=None,
                   coarse_cells=COARSE_CELLS, support_radius=SUPPORT_RADIUS):
    """Fit the POD basis on the training columns and train the coefficient network.

    Parameters
    ----------
    snapshots : SnapshotMatrix
        Needs ``columns`` and ``micro_inputs`` of shape ``(N_h, N)``.
    split : DataSplit
    n_rb : int
    config : TrainConfig or dict, optional
        ``rng_seed`` seeds the weight initialization.
    basis : ReducedBasis, optional
        Precomputed basis of the training columns with at least ``n_rb`` modes.

    Returns
    -------
    RomModel
    """
    cfg = _train_config(config)
    U, X = _columns(snapshots)
    tr, va = split.train_indices, split.valid_indices
    if basis is None:
        basis = compute_pod(U[:, tr], min(int(n_rb), len(tr)))
    if basis.max_modes < n_rb:
        raise ValueError(f"basis has {basis.max_modes} modes, n_rb={n_rb} requested")
    basis = ReducedBasis(basis.truncate(n_rb), basis.singular_values[:n_rb],
                         basis.all_singular_values)
    scale = _input_scale(X[:, tr])
    net = build_benchmark_coeff_net(n_rb, _fine_cells(U.shape[0]), coarse_cells,
                                    support_radius, rng_seed=cfg.rng_seed)
    history = fit_coeff_net(net, basis.basis_columns, X[:, tr].T, U[:, tr].T,
                            X[:, va].T, U[:, va].T, cfg, input_scale=scale)
    log.info("coefficient net n_rb=%d: %s after %d epochs", n_rb, history.stop_reason,
             history.epochs[-1])
    return RomModel(basis, net, None, scale, getattr(snapshots, "benchmark_id", None),
                    {"coeff_history": history, "coeff_seed": cfg.rng_seed})


def train_closure(model, snapshots, split, config=None, closure_cells=CLOSURE_CELLS,
                  support_radius=SUPPORT_RADIUS, gain=CLOSURE_GAIN):
    """Train a closure network on the training residuals of a fitted model.

    The closure is initialized from ``config.rng_seed + 1``. Without a
    config, training runs ``CLOSURE_MAX_EPOCHS`` epochs of
    ``CLOSURE_ITERATIONS_PER_EPOCH`` iterations.
    """
    cfg = _train_config(config, closure=True)
    U, X = _columns(snapshots)
    tr, va = split.train_indices, split.valid_indices
    net = build_benchmark_closure_net(_fine_cells(U.shape[0]), closure_cells, support_radius,
                                      rng_seed=cfg.rng_seed + 1, gain=gain)
    scale = _closure_scale(X[:, tr])
    history = fit_closure_net(net, model, X[:, tr].T, U[:, tr].T, X[:, va].T, U[:, va].T, cfg,
                              input_scale=scale)
    log.info("closure net: %s after %d epochs", history.stop_reason, history.epochs[-1])
    return model.with_closure(net, scale, closure_history=history, closure_seed=cfg.rng_seed + 1)


# --- errors ----------------------------------------------------------------

def relative_errors(model, snapshots, indices, p=2, n_rb=None):
    """Per-snapshot relative errors in the ``p``-norm.

    Returns a dict with arrays ``E_POD``, ``E_PODMINN`` and ``E_PODMINNplus``
    (the last is NaN without a closure). ``E_POD`` uses the first ``n_rb``
    modes of the model's basis (default: all of them).
    """
    p = check_norm_order(p)
    U, X = _columns(snapshots)
    indices = np.asarray(indices, dtype=int)
    if indices.size and (indices.min() < 0 or indices.max() >= U.shape[1]):
        raise IndexError("snapshot index out of range")
    Ut, Xt = U[:, indices].T, X[:, indices].T
    denom = vector_norm(Ut, p, axis=1)
    if np.any(denom == 0):
        raise ValueError("relative error undefined for a zero snapshot")
    Vp = model.basis.truncate(model.n_rb if n_rb is None else n_rb)
    out = {"E_POD": vector_norm(Ut - (Ut @ Vp) @ Vp.T, p, axis=1) / denom}
    base = model.coefficients(Xt) @ model.V.T
    out["E_PODMINN"] = vector_norm(Ut - base, p, axis=1) / denom
    if model.closure_net is not None:
        out["E_PODMINNplus"] = vector_norm(Ut - base - model.closure(Xt), p, axis=1) / denom
    else:
        out["E_PODMINNplus"] = np.full(len(indices), np.nan)
    return out


def evaluate_errors(model, snapshots, indices, n_rb=None, p=2):
    """Mean relative errors over ``indices``; one table row as a dict."""
    errs = relative_errors(model, snapshots, indices, p, n_rb)
    row = {"n_rb": model.n_rb if n_rb is None else int(n_rb),
           "p": "inf" if check_norm_order(p) == np.inf else "2",
           "n_test": len(np.asarray(indices))}
    for key, values in errs.items():
        row[key] = float(np.mean(values)) if len(values) else float("nan")
    return row


# --- estimators ------------------------------------------------------------

class PODMINNRegressor(RegressorMixin, BaseEstimator):
    """POD basis plus a mesh-informed coefficient network.

    ``X`` holds nodal micro inputs and ``y`` the matching full-order
    states, one sample per row, both on the same square structured grid.

    Parameters
    ----------
    n_rb : int
        Number of POD modes.
    coarse_cells : int
        Cells per side of the hidden mesh.
    support_radius : float
    optimizer : {"lbfgs", "adam"}
    learning_rate : float, optional
    max_epochs : int
    iterations_per_epoch : int
    early_stop_window : int
    random_state : int
        Seeds the weight initialization.

    Attributes
    ----------
    model_ : RomModel
    pod_ : ReducedBasis
    history_ : History
    """

    def __init__(self, n_rb=16, coarse_cells=COARSE_CELLS, support_radius=SUPPORT_RADIUS,
                 optimizer="lbfgs", learning_rate=None, max_epochs=250, iterations_per_epoch=1,
                 early_stop_window=2, random_state=0):
        self.n_rb = n_rb
        self.coarse_cells = coarse_cells
        self.support_radius = support_radius
        self.optimizer = optimizer
        self.learning_rate = learning_rate
        self.max_epochs = max_epochs
        self.iterations_per_epoch = iterations_per_epoch
        self.early_stop_window = early_stop_window
        self.random_state = random_state

    def _config(self):
        return TrainConfig(optimizer=self.optimizer, learning_rate=self.learning_rate,
                           max_epochs=self.max_epochs,
                           iterations_per_epoch=self.iterations_per_epoch,
                           early_stop_window=self.early_stop_window,
                           rng_seed=int(self.random_state or 0))

    def fit(self, X, y, X_valid=None, y_valid=None):
        X = check_samples(X)
        y = check_samples(y, n_features=X.shape[1], name="y")
        check_same_length(X, y, names=["X", "y"])
        if X_valid is not None:
            X_valid = check_samples(X_valid, n_features=X.shape[1], name="X_valid")
            y_valid = check_samples(y_valid, n_features=X.shape[1], name="y_valid")
        basis = compute_pod(y.T, min(int(self.n_rb), *y.shape))
        if basis.max_modes < self.n_rb:
            raise ValueError(f"training data has rank {basis.max_modes} < n_rb={self.n_rb}")
        scale = _input_scale(X)
        net = build_benchmark_coeff_net(self.n_rb, _fine_cells(X.shape[1]), self.coarse_cells,
                                        self.support_radius, rng_seed=int(self.random_state or 0))
        self.history_ = fit_coeff_net(net, basis.basis_columns, X, y, X_valid, y_valid,
                                      self._config(), input_scale=scale)
        self.pod_ = basis
        self.model_ = RomModel(basis, net, None, scale, metadata={"coeff_history": self.history_})
        self.n_features_in_ = X.shape[1]
        return self

    def predict_coefficients(self, X):
        check_is_fitted(self, "model_")
        return self.model_.coefficients(check_samples(X, n_features=self.n_features_in_))

    def predict(self, X):
        check_is_fitted(self, "model_")
        return predict(self.model_, check_samples(X, n_features=self.n_features_in_).T,
                       closure=False).T


class PODMINNPlusRegressor(RegressorMixin, BaseEstimator):
    """POD-MINN model corrected by a mesh-informed closure network.

    Parameters
    ----------
    rom : PODMINNRegressor, optional
        Used as is when already fitted, otherwise cloned and fitted first.
        Defaults to ``PODMINNRegressor()``.
    closure_cells : int
        Cells per side of the closure's hidden mesh.
    support_radius : float
    closure_gain : float
        Glorot gain of the closure's first layer.
    optimizer, learning_rate, max_epochs, iterations_per_epoch, early_stop_window
        Closure training settings.
    inf_norm_term : bool
        Add a smooth max-norm term to the closure loss.
    random_state : int

    Attributes
    ----------
    rom_ : PODMINNRegressor
    model_ : RomModel
    history_ : History
    """

    def __init__(self, rom=None, closure_cells=CLOSURE_CELLS, support_radius=SUPPORT_RADIUS,
                 closure_gain=CLOSURE_GAIN, optimizer="lbfgs", learning_rate=None,
                 max_epochs=CLOSURE_MAX_EPOCHS, iterations_per_epoch=CLOSURE_ITERATIONS_PER_EPOCH,
                 early_stop_window=2,
                 inf_norm_term=False, random_state=0):
        self.rom = rom
        self.closure_cells = closure_cells
        self.support_radius = support_radius
        self.closure_gain = closure_gain
        self.optimizer = optimizer
        self.learning_rate = learning_rate
        self.max_epochs = max_epochs
        self.iterations_per_epoch = iterations_per_epoch
        self.early_stop_window = early_stop_window
        self.inf_norm_term = inf_norm_term
        self.random_state = random_state

    def fit(self, X, y, X_valid=None, y_valid=None):
        X = check_samples(X)
        y = check_samples(y, n_features=X.shape[1], name="y")
        rom = self.rom if self.rom is not None else PODMINNRegressor()
        if not hasattr(rom, "model_"):
            rom = clone(rom).fit(X, y, X_valid, y_valid)
        if rom.n_features_in_ != X.shape[1]:
            raise ValueError("the base model was fitted on inputs of a different size")
        if X_valid is not None:
            X_valid = check_samples(X_valid, n_features=X.shape[1], name="X_valid")
            y_valid = check_samples(y_valid, n_features=X.shape[1], name="y_valid")
        seed = int(self.random_state or 0)
        net = build_benchmark_closure_net(_fine_cells(X.shape[1]), self.closure_cells,
                                          self.support_radius, rng_seed=seed,
                                          gain=self.closure_gain)
        cfg = TrainConfig(optimizer=self.optimizer, learning_rate=self.learning_rate,
                          max_epochs=self.max_epochs,
                          iterations_per_epoch=self.iterations_per_epoch,
                          early_stop_window=self.early_stop_window,
                          inf_norm_term=self.inf_norm_term, rng_seed=seed)
        scale = _closure_scale(X)
        self.history_ = fit_closure_net(net, rom.model_, X, y, X_valid, y_valid, cfg,
                                        input_scale=scale)
        self.rom_ = rom
        self.model_ = rom.model_.with_closure(net, scale, closure_history=self.history_)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        return predict(self.model_, check_samples(X, n_features=self.n_features_in_).T).T
