"""Proper orthogonal decomposition of snapshot matrices."""

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .validation import check_norm_order, check_samples, check_vector

RANK_RTOL = 1e-13


@dataclass(frozen=True, eq=False)
class ReducedBasis:
    """Orthonormal POD modes (as columns) and their singular values.

    ``all_singular_values`` keeps the full spectrum of the snapshot matrix,
    including the values of discarded, numerically null modes.
    """

    basis_columns: np.ndarray = field(repr=False)
    singular_values: np.ndarray = field(repr=False)
    all_singular_values: np.ndarray = field(repr=False)

    @property
    def dof_count(self):
        return self.basis_columns.shape[0]

    @property
    def max_modes(self):
        return self.basis_columns.shape[1]

    def truncate(self, n_rb):
        return self.basis_columns[:, :_check_n_rb(self, n_rb)]


def _check_n_rb(basis, n_rb):
    n_rb = int(n_rb)
    if not 0 <= n_rb <= basis.max_modes:
        raise ValueError(f"n_rb={n_rb} outside [0, {basis.max_modes}]")
    return n_rb


def _mgs(Q):
    """Re-orthonormalize columns with modified Gram-Schmidt (two passes)."""
    Q = Q.copy()
    for _ in range(2):
        for k in range(Q.shape[1]):
            for j in range(k):
                Q[:, k] -= (Q[:, j] @ Q[:, k]) * Q[:, j]
            Q[:, k] /= np.linalg.norm(Q[:, k])
    return Q


def _svd_direct(S):
    U, s, _ = np.linalg.svd(S, full_matrices=False)
    return U, s


def _svd_method_of_snapshots(S):
    lam, Z = np.linalg.eigh(S.T @ S)
    order = np.argsort(lam)[::-1]
    lam, Z = np.clip(lam[order], 0.0, None), Z[:, order]
    s = np.sqrt(lam)
    keep = s > 0
    U = np.zeros((S.shape[0], s.size))
    U[:, keep] = (S @ Z[:, keep]) / s[keep]
    return U, s


def compute_pod(snapshots, max_modes, method="svd", rank_rtol=RANK_RTOL):
    """POD basis of the columns of ``snapshots``.

    Parameters
    ----------
    snapshots : SnapshotMatrix or ndarray of shape (N_h, N)
        Snapshots stored column-wise. No centering is applied.
    max_modes : int
        Number of modes to keep, ``1 <= max_modes <= min(N_h, N)``. Fewer
        are kept when the numerical rank (``sigma_i / sigma_1 > rank_rtol``)
        is smaller.
    method : {"svd", "snapshots"}
        ``"svd"`` runs a thin SVD of ``S``; ``"snapshots"`` eigendecomposes
        the Gram matrix ``S^T S``. The latter squares the conditioning and
        cannot resolve ``sigma_i / sigma_1`` below roughly ``1e-8``.
    """
    S = getattr(snapshots, "columns", snapshots)
    S = np.asarray(S, dtype=float)
    if S.ndim != 2:
        raise ValueError("snapshot matrix must be two-dimensional")
    n_h, n = S.shape
    if not 1 <= max_modes <= min(n_h, n):
        raise ValueError(f"max_modes={max_modes} outside [1, {min(n_h, n)}]")
    if method == "svd":
        U, s = _svd_direct(S)
    elif method == "snapshots":
        U, s = _svd_method_of_snapshots(S)
    else:
        raise ValueError(f"unknown method {method!r}")
    if not s.size or s[0] <= 0.0:
        raise ValueError("snapshot matrix is identically zero; no POD modes exist")

    rank = int(np.count_nonzero(s / s[0] > rank_rtol))
    kept = min(int(max_modes), rank)
    V = U[:, :kept]
    if method == "snapshots":
        V = _mgs(V)
    for arr in (V, s):
        arr.setflags(write=False)
    return ReducedBasis(V, s[:kept], s)


def project(basis, n_rb, u):
    """Reduced coefficients ``V^T u`` using the first ``n_rb`` modes."""
    V = basis.truncate(n_rb)
    u = np.asarray(u, dtype=float)
    if u.shape[0] != V.shape[0]:
        raise ValueError(f"vector has length {u.shape[0]}, basis has {V.shape[0]} rows")
    return V.T @ u


def reconstruct(basis, coeffs):
    """Expand coefficients over the leading modes: ``V c``."""
    coeffs = np.asarray(coeffs, dtype=float)
    n_rb = coeffs.shape[0]
    if n_rb > basis.max_modes:
        raise ValueError(f"{n_rb} coefficients but only {basis.max_modes} modes")
    return basis.basis_columns[:, :n_rb] @ coeffs


def vector_norm(v, p, axis=0):
    return np.linalg.norm(v, ord=np.inf if p in (np.inf, "inf") else 2, axis=axis)


def projection_error(basis, n_rb, u, p=2):
    """Relative projection error ``||(I - V V^T) u||_p / ||u||_p``."""
    p = check_norm_order(p)
    u = check_vector(u, basis.dof_count, name="u")
    denom = vector_norm(u, p)
    if denom == 0.0:
        raise ValueError("projection error undefined for a zero vector")
    V = basis.truncate(n_rb)
    return float(vector_norm(u - V @ (V.T @ u), p) / denom)


class POD(TransformerMixin, BaseEstimator):
    """POD as a transformer between full-order states and reduced coefficients.

    Samples are rows, following the estimator convention: ``X`` has shape
    ``(n_snapshots, N_h)``, i.e. the transpose of the snapshot matrix.

    Parameters
    ----------
    n_components : int
        Number of modes used by :meth:`transform` (``n_rb``).
    max_modes : int, optional
        Modes kept after fitting; defaults to ``min(n_samples, N_h)``.
    method : {"svd", "snapshots"}
        See :func:`compute_pod`.
    """

    def __init__(self, n_components=10, max_modes=None, method="svd"):
        self.n_components = n_components
        self.max_modes = max_modes
        self.method = method

    def fit(self, X, y=None):
        X = check_samples(X)
        max_modes = self.max_modes or min(X.shape)
        self.basis_ = compute_pod(X.T, max_modes, method=self.method)
        if self.n_components > self.basis_.max_modes:
            raise ValueError(f"n_components={self.n_components} exceeds the "
                             f"{self.basis_.max_modes} available modes")
        self.singular_values_ = self.basis_.all_singular_values
        self.n_features_in_ = X.shape[1]
        return self

    @property
    def components_(self):
        check_is_fitted(self, "basis_")
        return self.basis_.truncate(self.n_components).T

    def transform(self, X):
        check_is_fitted(self, "basis_")
        X = check_samples(X, n_features=self.n_features_in_)
        return X @ self.components_.T

    def inverse_transform(self, X):
        check_is_fitted(self, "basis_")
        X = check_samples(X, n_features=self.n_components)
        return X @ self.components_

    def projection_errors(self, X, p=2, n_components=None):
        """Relative projection error of every row of ``X``."""
        check_is_fitted(self, "basis_")
        p = check_norm_order(p)
        X = check_samples(X, n_features=self.n_features_in_)
        V = self.basis_.truncate(self.n_components if n_components is None else n_components)
        resid = X - (X @ V) @ V.T
        return vector_norm(resid, p, axis=1) / vector_norm(X, p, axis=1)
