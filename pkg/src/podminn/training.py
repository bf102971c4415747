"""Losses, full-batch optimizers, early stopping and data splits."""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .minn import FactoredBatch
from .validation import check_same_length

log = logging.getLogger(__name__)

NORM_EPS = 1e-12
SOFTMAX_BETA = 50.0


class OptimizationError(RuntimeError):
    """Raised when training has to be aborted."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


# --- splits ----------------------------------------------------------------

@dataclass(frozen=True)
class DataSplit:
    train_indices: np.ndarray
    valid_indices: np.ndarray
    test_indices: np.ndarray

    def sizes(self):
        return len(self.train_indices), len(self.valid_indices), len(self.test_indices)


def make_split(n, sizes=(750, 50, 200), rng_seed=0):
    """Shuffle ``range(n)`` with ``rng_seed`` and cut it into train/valid/test."""
    sizes = tuple(int(s) for s in sizes)
    if len(sizes) != 3 or min(sizes) < 0:
        raise ValueError(f"sizes must be three nonnegative integers, got {sizes}")
    if sum(sizes) > n:
        raise ValueError(f"split sizes {sizes} exceed the {n} available samples")
    perm = np.random.default_rng(rng_seed).permutation(n)
    a, b, c = sizes
    return DataSplit(perm[:a], perm[a:a + b], perm[a + b:a + b + c])


# --- losses ----------------------------------------------------------------

def smoothed_norms(R, eps=NORM_EPS):
    """Row-wise ``sqrt(||r||^2 + eps^2)`` and its gradient."""
    norms = np.sqrt(np.einsum("ij,ij->i", R, R) + eps * eps)
    return norms, R / norms[:, None]


def soft_max_abs(R, beta=SOFTMAX_BETA):
    """Row-wise smooth ``max_j |r_j|`` via log-sum-exp over ``±beta r``.

    Overestimates the max norm by at most ``log(2 n) / beta``.
    """
    Z = np.concatenate([beta * R, -beta * R], axis=1)
    lse = logsumexp(Z, axis=1)
    w = np.exp(Z - lse[:, None])
    n = R.shape[1]
    return lse / beta, w[:, :n] - w[:, n:]


def norm_loss(net, X, targets, inf_norm_term=False, beta=SOFTMAX_BETA):
    """Mean smoothed 2-norm of ``targets - net(X)`` (plus soft max norm).

    Returns ``(value, flat_gradient)`` with respect to the network parameters.
    """
    out, cache = net.forward(X)
    R = targets - out
    n = R.shape[0]
    norms, dR = smoothed_norms(R)
    value = norms.mean()
    if inf_norm_term:
        smax, dS = soft_max_abs(R, beta)
        value += smax.mean()
        dR = dR + dS
    # d value / d out = -dR / n
    grads = net.backward(cache, -dR / n, input_gradient=False)
    return float(value), grads.flat()


def loss_rb(net, basis, n_rb, snapshots, micro_inputs, indices):
    """Mean coefficient-residual norm ``|V^T S(:, i) - net(mu_i)|`` over ``indices``.

    ``snapshots`` and ``micro_inputs`` are column-wise (N_h, N) arrays.
    """
    indices = np.asarray(indices)
    if indices.size == 0:
        raise ValueError("loss over an empty index set")
    V = basis.truncate(n_rb)
    if net.out_dim != V.shape[1]:
        raise ValueError(f"network outputs {net.out_dim} coefficients, basis has {V.shape[1]}")
    S = np.asarray(snapshots)[:, indices]
    X = np.asarray(micro_inputs)[:, indices]
    return norm_loss(net, X.T, (V.T @ S).T)


def loss_closure(closure_net, residual_targets, micro_inputs, indices, inf_norm_term=False):
    """Mean norm of ``residual - closure(mu)``; residuals are column-wise."""
    indices = np.asarray(indices)
    if indices.size == 0:
        raise ValueError("loss over an empty index set")
    R = np.asarray(residual_targets)
    X = np.asarray(micro_inputs)
    if R.shape != X.shape:
        raise ValueError(f"residuals {R.shape} and inputs {X.shape} differ in shape")
    return norm_loss(closure_net, X[:, indices].T, R[:, indices].T, inf_norm_term)


def make_objective(net, X, targets, inf_norm_term=False):
    """Closure ``theta -> (value, gradient)`` over a fixed dataset."""
    check_same_length(X, targets, names=["inputs", "targets"])
    X = FactoredBatch.compress(X)

    def objective(theta):
        net.set_params(theta)
        return norm_loss(net, X, targets, inf_norm_term)

    return objective


# --- early stopping --------------------------------------------------------

def early_stop_check(train_history, valid_history, window=2):
    """True when, over the last ``window`` epochs, training loss strictly
    decreased and validation loss strictly increased at every step."""
    if window < 1:
        raise ValueError("window must be >= 1")
    if len(train_history) != len(valid_history):
        raise ValueError("histories must have the same length")
    if len(train_history) < window + 1:
        return False
    t = np.asarray(train_history[-window - 1:], dtype=float)
    v = np.asarray(valid_history[-window - 1:], dtype=float)
    return bool(np.all(np.diff(t) < 0) and np.all(np.diff(v) > 0))


# --- optimizers ------------------------------------------------------------

@dataclass
class TrainConfig:
    """Optimizer settings.

    ``learning_rate=None`` means 1.0 for L-BFGS and 1e-3 for Adam. One
    epoch performs ``iterations_per_epoch`` optimizer iterations over the
    full batch.
    """

    optimizer: str = "lbfgs"
    learning_rate: float = None
    max_epochs: int = 250
    iterations_per_epoch: int = 1
    lbfgs_history: int = 10
    early_stop_window: int = 2
    inf_norm_term: bool = False
    rng_seed: int = 0
    c1: float = 1e-4
    max_backtracks: int = 30
    fallback_step: float = 1e-3
    max_failures: int = 5
    gtol: float = 1e-13
    adam_betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.optimizer not in ("lbfgs", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.max_epochs < 1 or self.early_stop_window < 1 or self.iterations_per_epoch < 1:
            raise ValueError("max_epochs, early_stop_window and iterations_per_epoch must be >= 1")

    @property
    def lr(self):
        if self.learning_rate is not None:
            return float(self.learning_rate)
        return 1.0 if self.optimizer == "lbfgs" else 1e-3


@dataclass
class History:
    epochs: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    valid_loss: list = field(default_factory=list)
    step_size: list = field(default_factory=list)
    backtracks: list = field(default_factory=list)
    best_epoch: int = 0
    stop_reason: str = ""
    line_search_failures: int = 0

    def append(self, epoch, train, valid, step, backtracks):
        self.epochs.append(epoch)
        self.train_loss.append(train)
        self.valid_loss.append(valid)
        self.step_size.append(step)
        self.backtracks.append(backtracks)

    def rows(self):
        return list(zip(self.epochs, self.train_loss, self.valid_loss,
                        self.step_size, self.backtracks))

    HEADER = ("epoch", "train_loss", "valid_loss", "step_size", "line_search_backtracks")


class _LBFGS:
    """L-BFGS with two-loop recursion and Armijo backtracking."""

    def __init__(self, objective, config):
        self.objective = objective
        self.cfg = config
        self.s, self.y, self.rho = [], [], []
        self.failures = 0
        self.total_failures = 0

    def reset(self):
        self.s.clear()
        self.y.clear()
        self.rho.clear()

    def direction(self, g):
        q = g.copy()
        alphas = []
        for s, y, rho in zip(reversed(self.s), reversed(self.y), reversed(self.rho)):
            a = rho * (s @ q)
            alphas.append(a)
            q -= a * y
        if self.s:
            s, y = self.s[-1], self.y[-1]
            q *= (s @ y) / (y @ y)
        for (s, y, rho), a in zip(zip(self.s, self.y, self.rho), reversed(alphas)):
            b = rho * (y @ q)
            q += (a - b) * s
        return -q

    def step(self, theta, f, g, epoch):
        """One iteration; returns ``(theta, f, g, step, backtracks)``."""
        d = self.direction(g)
        slope = g @ d
        if not np.isfinite(slope) or slope >= 0:
            self.reset()
            d = -g
            slope = -(g @ g)
        t = self.cfg.lr
        if not self.s:
            # no curvature information yet: cap the first step like a unit gradient step
            t = self.cfg.lr * min(1.0, 1.0 / np.abs(g).sum())
        for k in range(self.cfg.max_backtracks + 1):
            cand = theta + t * d
            f_new, g_new = self.objective(cand)
            if np.isfinite(f_new) and f_new <= f + self.cfg.c1 * t * slope:
                break
            t *= 0.5
        else:
            return self._fallback(theta, g, epoch)
        if not np.all(np.isfinite(g_new)):
            raise OptimizationError(f"non-finite gradient at epoch {epoch}", epoch)
        self.failures = 0
        s, y = cand - theta, g_new - g
        sy = s @ y
        if sy > 1e-12 * np.sqrt((s @ s) * (y @ y)) and sy > 0:
            self.s.append(s)
            self.y.append(y)
            self.rho.append(1.0 / sy)
            if len(self.s) > self.cfg.lbfgs_history:
                del self.s[0], self.y[0], self.rho[0]
        return cand, f_new, g_new, t, k

    def _fallback(self, theta, g, epoch):
        self.failures += 1
        self.total_failures += 1
        self.reset()
        if self.failures >= self.cfg.max_failures:
            raise OptimizationError(
                f"line search failed {self.failures} consecutive times (epoch {epoch})", epoch)
        log.warning("line search failed at epoch %d; taking a fallback gradient step", epoch)
        t = self.cfg.fallback_step / np.linalg.norm(g)
        cand = theta - t * g
        f_new, g_new = self.objective(cand)
        if not (np.isfinite(f_new) and np.all(np.isfinite(g_new))):
            raise OptimizationError(f"non-finite loss after fallback step at epoch {epoch}", epoch)
        return cand, f_new, g_new, -t, self.cfg.max_backtracks


class _Adam:
    def __init__(self, objective, config):
        self.objective = objective
        self.cfg = config
        self.m = self.v = None
        self.t = 0

    def step(self, theta, f, g, epoch):
        b1, b2 = self.cfg.adam_betas
        if self.m is None:
            self.m = np.zeros_like(theta)
            self.v = np.zeros_like(theta)
        self.t += 1
        self.m = b1 * self.m + (1 - b1) * g
        self.v = b2 * self.v + (1 - b2) * g * g
        mhat = self.m / (1 - b1 ** self.t)
        vhat = self.v / (1 - b2 ** self.t)
        theta = theta - self.cfg.lr * mhat / (np.sqrt(vhat) + self.cfg.adam_eps)
        f, g = self.objective(theta)
        return theta, f, g, self.cfg.lr, 0


def _value(fn, theta):
    out = fn(theta)
    return float(out[0] if isinstance(out, tuple) else out)


def minimize(objective, theta0, config=None, validation_objective=None):
    """Full-batch training loop with early stopping and best-epoch checkpoint.

    Parameters
    ----------
    objective : callable
        ``theta -> (value, gradient)``.
    theta0 : ndarray
    config : TrainConfig
    validation_objective : callable, optional
        ``theta -> value`` (or ``(value, gradient)``). Without it, the
        training loss doubles as the selection criterion and early stopping
        never fires.

    Returns
    -------
    theta : ndarray
        Parameters of the epoch with the lowest validation loss.
    history : History
    """
    cfg = config or TrainConfig()
    theta = np.array(theta0, dtype=float)
    f, g = objective(theta)
    if not (np.isfinite(f) and np.all(np.isfinite(g))):
        raise OptimizationError("non-finite loss or gradient at epoch 0", 0)
    valid = _value(validation_objective, theta) if validation_objective else f
    hist = History()
    hist.append(0, f, valid, 0.0, 0)
    best_theta, best_valid = theta.copy(), valid
    opt = _LBFGS(objective, cfg) if cfg.optimizer == "lbfgs" else _Adam(objective, cfg)

    for epoch in range(1, cfg.max_epochs + 1):
        if np.abs(g).max() <= cfg.gtol:
            hist.stop_reason = "stationary"
            break
        step, backtracks = 0.0, 0
        for _ in range(cfg.iterations_per_epoch):
            theta, f, g, step, k = opt.step(theta, f, g, epoch)
            backtracks += k
            if not np.isfinite(f):
                raise OptimizationError(f"non-finite loss at epoch {epoch}", epoch)
            if np.abs(g).max() <= cfg.gtol:
                break
        valid = _value(validation_objective, theta) if validation_objective else f
        hist.append(epoch, f, valid, step, backtracks)
        log.debug("epoch %d train %.6e valid %.6e", epoch, f, valid)
        if valid < best_valid:
            best_theta, best_valid = theta.copy(), valid
            hist.best_epoch = epoch
        if validation_objective and early_stop_check(hist.train_loss, hist.valid_loss,
                                                     cfg.early_stop_window):
            hist.stop_reason = "early_stop"
            break
    else:
        hist.stop_reason = "max_epochs"
    hist.line_search_failures = getattr(opt, "total_failures", 0)
    return best_theta, hist
