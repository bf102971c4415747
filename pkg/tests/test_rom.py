import numpy as np
import pytest
from sklearn.base import clone

from podminn.mesh import build_unit_square_mesh
from podminn.minn import Dense, Network, init_glorot
from podminn.pod import ReducedBasis, compute_pod
from podminn.rom import (FactorizedHead, PODMINNPlusRegressor, PODMINNRegressor, RomModel,
                         build_benchmark_closure_net, build_benchmark_coeff_net,
                         combine_factorized, evaluate_errors, fit_factorized, predict,
                         relative_errors, train_closure, train_pod_minn)
from podminn.training import TrainConfig, make_split


class Oracle:
    """Coefficient 'network' returning the exact projection of a known state."""

    def __init__(self, lookup_inputs, states, V, scale=1.0):
        self.X, self.U, self.V, self.scale = lookup_inputs, states, V, scale
        self.out_dim = V.shape[1]

    def __call__(self, X):
        idx = [int(np.argmin(np.abs(self.X - x * self.scale).sum(axis=1))) for x in X]
        return self.U[idx] @ self.V


def toy_model(u_columns, V, closure=None):
    basis = ReducedBasis(V, np.ones(V.shape[1]), np.ones(V.shape[1]))
    oracle = Oracle(u_columns.T, u_columns.T, V)
    return RomModel(basis, oracle, closure, closure_scale=1.0)


# --- architectures ---

def test_coeff_net_dimensions_and_count():
    net = build_benchmark_coeff_net(10)
    first, second = net.layers
    assert (first.in_dim, first.out_dim, second.out_dim) == (2601, 676, 10)
    assert first.activation.name == "tanh" and second.activation.name == "identity"
    assert net.param_count == first.pattern.nnz + 676 + 676 * 10 + 10
    np.testing.assert_array_equal(net(np.zeros(2601)), second.bias)
    assert np.all(second.bias == 0)


def test_closure_net_dimensions_and_zero_start(rng):
    net = build_benchmark_closure_net()
    dims = [net.layers[0].in_dim, net.layers[0].out_dim, net.layers[1].out_dim]
    assert dims == [2601, 1296, 2601]
    assert np.all(net(rng.normal(size=(3, 2601))) == 0)


def test_architecture_rejects_mismatched_domains():
    from podminn.mesh import build_unit_square_mesh as build
    with pytest.raises(ValueError):
        build_benchmark_coeff_net(4, build(10), build(5, (0.0, 1.0, 0.0, 1.0)))
    with pytest.raises(ValueError):
        build_benchmark_coeff_net(0, 10, 5)


# --- factorized head ---

def make_head(rng, n_rb=4, k=3, two=False):
    micro = [init_glorot(Network([Dense(6, 8, "tanh"), Dense(8, n_rb * k, "identity")]), s)
             for s in (1, 2)[:2 if two else 1]]
    macro = init_glorot(Network([Dense(2, 5, "tanh"), Dense(5, k, "identity")]), 3)
    return FactorizedHead(micro, macro, n_rb, k)


def test_selector_vector_returns_first_column(rng):
    head = make_head(rng)
    macro = head.macro_branch
    macro.set_params(np.zeros(macro.param_count))
    macro.layers[-1].bias[...] = [1.0, 0.0, 0.0]
    macro.set_params(macro.get_params())
    mu = rng.normal(size=6)
    X = head.micro_branches[0](mu).reshape(4, 3)
    np.testing.assert_allclose(combine_factorized(head, mu, np.zeros(2)), X[:, 0], atol=1e-15)


def test_identity_micro_matrix_returns_macro_output(rng):
    head = make_head(rng, n_rb=3, k=3)
    micro = head.micro_branches[0]
    micro.set_params(np.zeros(micro.param_count))
    micro.layers[-1].bias[...] = np.eye(3).ravel()
    micro.set_params(micro.get_params())
    muM = rng.normal(size=2)
    np.testing.assert_allclose(combine_factorized(head, rng.normal(size=6), muM),
                               head.macro_branch(muM), atol=1e-15)


@pytest.mark.parametrize("two", [False, True])
def test_head_matches_naive_product_and_gradient(rng, two):
    head = make_head(rng, two=two)
    mu_m, mu_M = rng.normal(size=(5, 6)), rng.normal(size=(5, 2))
    out = head(mu_m, mu_M)
    for n in range(5):
        X = head.micro_branches[0](mu_m[n]).reshape(4, 3)
        if two:
            X = X * head.micro_branches[1](mu_m[n]).reshape(4, 3)
        y = head.macro_branch(mu_M[n])
        naive = [sum(X[i, j] * y[j] for j in range(3)) for i in range(4)]
        np.testing.assert_allclose(out[n], naive, atol=1e-14)
    G = rng.normal(size=out.shape)
    theta = head.get_params()
    _, cache = head.forward(mu_m, mu_M)
    grad = head.backward(cache, G)
    f = lambda th: np.sum(G * head.set_params(th)(mu_m, mu_M))  # noqa: E731
    d = rng.normal(size=theta.size)
    fd = (f(theta + 1e-5 * d) - f(theta - 1e-5 * d)) / 2e-5
    assert abs(grad @ d - fd) <= 1e-6 * max(1.0, abs(fd))


def test_head_dimension_errors(rng):
    head = make_head(rng)
    with pytest.raises(ValueError):
        head(np.ones(5), np.ones(2))
    with pytest.raises(ValueError):
        head(np.ones(6), np.ones(3))
    with pytest.raises(ValueError):
        FactorizedHead(head.micro_branches, head.macro_branch, n_rb=5, k=3)


def test_factorized_head_learns_macro_amplitude(rng):
    # state = amplitude * g(micro): a scalar macro parameter scales the output
    n_rb, k = 3, 2
    W = rng.normal(size=(n_rb, 6))
    mu_m = rng.uniform(-1, 1, (40, 6))
    amp = rng.uniform(0.5, 2.0, (40, 1))
    targets = amp * np.tanh(mu_m @ W.T)
    micro = init_glorot(Network([Dense(6, 12, "tanh"), Dense(12, n_rb * k, "identity")]), 0)
    macro = init_glorot(Network([Dense(1, k, "identity")]), 1)
    head = FactorizedHead(micro, macro, n_rb, k)
    start = np.mean(np.linalg.norm(targets - head(mu_m, amp), axis=1))
    head, hist = fit_factorized(head, mu_m, amp, targets, TrainConfig(max_epochs=300))
    end = np.mean(np.linalg.norm(targets - head(mu_m, amp), axis=1))
    assert end < 0.1 * start


# --- models on a small dataset ---

@pytest.fixture(scope="module")
def small_run(small_snapshots):
    split = make_split(60, (40, 10, 10), 0)
    cfg = TrainConfig(max_epochs=30)
    model = train_pod_minn(small_snapshots, split, 4, cfg, coarse_cells=6, support_radius=0.6)
    plus = train_closure(model, small_snapshots, split, cfg, closure_cells=8, support_radius=0.6)
    return small_snapshots, split, model, plus


def test_epoch_zero_loss_reproducible(small_snapshots):
    split = make_split(60, (40, 10, 10), 0)
    cfg = TrainConfig(max_epochs=2)
    runs = [train_pod_minn(small_snapshots, split, 3, cfg, coarse_cells=6) for _ in range(2)]
    h = [r.metadata["coeff_history"] for r in runs]
    assert np.isfinite(h[0].train_loss[0]) and h[0].train_loss == h[1].train_loss
    np.testing.assert_array_equal(runs[0].coeff_net.get_params(), runs[1].coeff_net.get_params())


def test_basis_comes_from_training_columns(small_run):
    snaps, split, model, _ = small_run
    ref = compute_pod(snaps.columns[:, split.train_indices], 4)
    np.testing.assert_allclose(np.abs(model.V.T @ ref.basis_columns), np.eye(4), atol=1e-8)


def test_closure_start_and_final_loss(small_run):
    snaps, split, model, plus = small_run
    h = plus.metadata["closure_history"]
    tr = split.train_indices
    resid = snaps.columns[:, tr] - predict(model, snaps.micro_inputs[:, tr])
    assert h.train_loss[0] == pytest.approx(np.linalg.norm(resid, axis=0).mean(), rel=1e-12)
    assert min(h.train_loss) <= h.train_loss[0]


def test_prediction_structure(small_run):
    snaps, split, model, plus = small_run
    mu = snaps.micro_inputs[:, split.test_indices]
    base = predict(model, mu)
    # without closure the prediction lies in span(V)
    V = model.V
    assert np.abs(base - V @ (V.T @ base)).max() <= 1e-10
    # the closure is purely additive
    corrected = predict(plus, mu)
    closure_out = plus.closure(mu.T).T
    np.testing.assert_allclose(V.T @ (corrected - closure_out), model.coefficients(mu.T).T,
                               atol=1e-10)
    single = predict(plus, mu[:, 0])
    np.testing.assert_allclose(single, corrected[:, 0], atol=1e-14)
    with pytest.raises(ValueError):
        predict(model, np.ones(5))


def test_zero_closure_equals_base_model(small_run):
    snaps, split, model, plus = small_run
    zero = plus.closure_net.copy()
    zero.set_params(np.zeros(zero.param_count))
    mu = snaps.micro_inputs[:, :5]
    np.testing.assert_array_equal(predict(model.with_closure(zero, 1.0), mu), predict(model, mu))


def test_error_ordering(small_run):
    snaps, split, model, plus = small_run
    for idx in (split.train_indices, split.test_indices):
        errs = relative_errors(plus, snaps, idx, p=2)
        assert np.all(errs["E_POD"] <= errs["E_PODMINN"] + 1e-12)
    row = evaluate_errors(plus, snaps, split.test_indices, p="inf")
    assert row["p"] == "inf" and row["n_test"] == 10 and row["n_rb"] == 4


def test_projection_oracle_gives_projection_error(small_run):
    snaps, split, model, _ = small_run
    oracle = RomModel(model.basis, Oracle(snaps.micro_inputs.T, snaps.columns.T, model.V))
    errs = relative_errors(oracle, snaps, split.test_indices, p=2)
    np.testing.assert_allclose(errs["E_PODMINN"], errs["E_POD"], rtol=1e-12)
    assert np.all(np.isnan(errs["E_PODMINNplus"]))


def test_exact_oracle_gives_zero_errors():
    U = np.array([[1.0, 2.0], [0.0, 0.0], [0.0, 0.0]])
    V = np.array([[1.0], [0.0], [0.0]])
    model = toy_model(U, V)
    row = evaluate_errors(model, U, [0, 1], p=2)
    assert row["E_POD"] == 0 and row["E_PODMINN"] == 0


def test_toy_errors_by_hand():
    u = np.array([[1.0], [1.0], [0.0]])
    V = np.array([[1.0], [0.0], [0.0]])
    closure = Network([Dense(3, 3, "identity")])
    # closure(mu) = (0, 0.5 mu_2, 0)
    W = np.zeros((3, 3))
    W[1, 1] = 0.5
    closure.set_params(np.concatenate([W.ravel(), np.zeros(3)]))
    model = toy_model(u, V, closure)
    row = evaluate_errors(model, u, [0], p=2)
    assert row["E_POD"] == pytest.approx(1 / np.sqrt(2), abs=1e-12)
    assert row["E_PODMINN"] == pytest.approx(1 / np.sqrt(2), abs=1e-12)
    assert row["E_PODMINNplus"] == pytest.approx(0.5 / np.sqrt(2), abs=1e-12)
    row = evaluate_errors(model, u, [0], p=np.inf)
    assert row["E_PODMINNplus"] == pytest.approx(0.5, abs=1e-12)


def test_monotone_projection_floor(small_run):
    snaps, split, _, _ = small_run
    basis = compute_pod(snaps.columns[:, split.train_indices], 12)
    U = snaps.columns[:, split.test_indices]
    prev = np.full(U.shape[1], np.inf)
    for k in range(1, 13):
        V = basis.truncate(k)
        e = np.linalg.norm(U - V @ (V.T @ U), axis=0) / np.linalg.norm(U, axis=0)
        assert np.all(e <= prev + 1e-12)
        prev = e


def test_model_validation():
    V = np.eye(3)[:, :2]
    basis = ReducedBasis(V, np.ones(2), np.ones(2))
    with pytest.raises(ValueError):
        RomModel(basis, Network([Dense(3, 3, "identity")]))
    with pytest.raises(ValueError):
        RomModel(basis, Network([Dense(3, 2, "identity")]), Network([Dense(3, 2)]))
    with pytest.raises(ValueError):
        RomModel(basis, Network([Dense(3, 2, "identity")]), input_scale=0.0)
    with pytest.raises(ValueError):
        RomModel(basis, Network([Dense(3, 2, "identity")]), Network([Dense(3, 3)]))


# --- estimators ---

def test_regressors(small_snapshots):
    X, Y = small_snapshots.micro_inputs.T, small_snapshots.columns.T
    rom = PODMINNRegressor(n_rb=3, coarse_cells=6, max_epochs=20)
    assert clone(rom).get_params()["n_rb"] == 3
    rom.fit(X[:40], Y[:40], X[40:50], Y[40:50])
    assert rom.predict(X[50:]).shape == (10, 169)
    assert rom.predict_coefficients(X[50:]).shape == (10, 3)
    plus = PODMINNPlusRegressor(rom=rom, closure_cells=8, max_epochs=20).fit(X[:40], Y[:40])
    assert plus.rom_ is rom
    np.testing.assert_allclose(plus.predict(X[50:]),
                               predict(plus.model_, X[50:].T).T, atol=1e-14)
    e_base = np.linalg.norm(Y[:40] - rom.predict(X[:40]), axis=1).mean()
    e_plus = np.linalg.norm(Y[:40] - plus.predict(X[:40]), axis=1).mean()
    assert e_plus <= e_base
    fresh = PODMINNPlusRegressor(rom=PODMINNRegressor(n_rb=2, coarse_cells=6, max_epochs=3),
                                 closure_cells=8, max_epochs=3).fit(X[:40], Y[:40])
    assert fresh.rom_ is not fresh.rom and not hasattr(fresh.rom, "model_")
    with pytest.raises(ValueError):
        rom.predict(np.ones((2, 7)))
    with pytest.raises(ValueError):
        PODMINNRegressor(n_rb=50, coarse_cells=6).fit(X[:20], Y[:20])
