import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exfl import mlp
from exfl.dataset import Dataset, FeatureRow
from exfl.errors import DimensionMismatch, NoProgress, SingularSystem, SweepEmpty
from exfl.mlp import (
    MlpNet,
    Scale,
    TrainConfig,
    compare_models,
    forward,
    grow_sweep,
    init_net,
    jacobian,
    lm_step,
    load_net,
    save_net,
    train,
)
from exfl.stats import ModelSpec


def identity_net(W1, W2):
    W1, W2 = np.asarray(W1, float), np.asarray(W2, float)
    n_hidden, n_in = W1.shape[0], W1.shape[1] - 1
    return MlpNet(n_in, n_hidden, W1, W2, Scale.identity(n_in), Scale.identity(1))


def linear_problem(n=300, seed=1):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, (n, 1))
    y = 2 * x[:, 0] + 1
    a, b = int(0.7 * n), int(0.85 * n)
    return (x[:a], y[:a]), (x[a:b], y[a:b]), (x[b:], y[b:])


def central_fd(net, X, eps=1e-6):
    w = net.flat()
    Xn = net.input_scale.normalize(X)
    out = np.zeros((X.shape[0], w.size))
    for k in range(w.size):
        wp, wm = w.copy(), w.copy()
        wp[k] += eps
        wm[k] -= eps
        fp = mlp._forward_norm(net.with_flat(wp), Xn)[0]
        fm = mlp._forward_norm(net.with_flat(wm), Xn)[0]
        out[:, k] = (fp - fm) / (2 * eps)
    return out


# --- forward ----------------------------------------------------------------

def test_forward_zero_hidden_weights():
    net = identity_net([[0.0, 0.0]], [2.0, 0.0])
    assert forward(net, [0.37]) == pytest.approx(1.0, abs=1e-15)


def test_forward_zero_output_weights_gives_denormalized_zero():
    rng = np.random.default_rng(0)
    net = init_net(3, 4, rng, Scale.identity(3), Scale(np.array([0.7]), np.array([2.0])))
    net = net.with_flat(np.r_[net.W1.ravel(), np.zeros(5)])
    assert np.allclose(forward(net, rng.normal(size=(6, 3))), 0.7)


def test_forward_matches_scalar_hand_evaluation():
    rng = np.random.default_rng(4)
    for _ in range(20):
        W1 = rng.uniform(-2, 2, (2, 3))
        W2 = rng.uniform(-2, 2, 3)
        ic, ih = rng.uniform(-1, 1, 2), rng.uniform(0.5, 2, 2)
        tc, th = rng.uniform(-1, 1, 1), rng.uniform(0.5, 2, 1)
        net = MlpNet(2, 2, W1, W2, Scale(ic, ih), Scale(tc, th))
        x = rng.normal(size=2)
        xn = [(x[0] - ic[0]) / ih[0], (x[1] - ic[1]) / ih[1]]
        h = [1 / (1 + math.exp(-(W1[j, 0] * xn[0] + W1[j, 1] * xn[1] + W1[j, 2]))) for j in range(2)]
        y = (W2[0] * h[0] + W2[1] * h[1] + W2[2]) * th[0] + tc[0]
        assert forward(net, x) == pytest.approx(y, abs=1e-12)


def test_forward_dimension_check():
    net = init_net(2, 3, np.random.default_rng(0))
    with pytest.raises(DimensionMismatch):
        forward(net, [1.0, 2.0, 3.0])
    with pytest.raises(DimensionMismatch):
        jacobian(net, np.zeros((4, 1)))


def test_net_validation():
    with pytest.raises(ValueError):
        MlpNet(1, 0, np.zeros((0, 2)), np.zeros(1), Scale.identity(1), Scale.identity(1))
    with pytest.raises(DimensionMismatch):
        MlpNet(1, 2, np.zeros((2, 3)), np.zeros(3), Scale.identity(1), Scale.identity(1))


@given(vals=st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=40))
def test_normalization_round_trip(vals):
    v = np.array(vals)[:, None]
    s = Scale.fit(v)
    assert np.max(np.abs(s.denormalize(s.normalize(v)) - v)) <= 1e-12 * max(1.0, np.max(np.abs(v)))
    z = s.normalize(v)
    assert z.min() >= -1 - 1e-12 and z.max() <= 1 + 1e-12


# --- jacobian ---------------------------------------------------------------

def test_jacobian_matches_finite_differences_on_100_probes():
    rng = np.random.default_rng(12)
    worst = 0.0
    for _ in range(100):
        n_in, n_h = int(rng.integers(1, 4)), int(rng.integers(1, 6))
        net = init_net(n_in, n_h, rng, low=-2, high=2)
        X = rng.normal(size=(1, n_in))
        J, Jn = jacobian(net, X), central_fd(net, X)
        rel = np.abs(J - Jn) / np.maximum(np.abs(Jn), 1e-6)
        worst = max(worst, rel.max())
    assert worst < 1e-4


def test_output_bias_derivative_is_one_and_zero_input_kills_weights():
    rng = np.random.default_rng(3)
    net = init_net(3, 4, rng)
    J = jacobian(net, np.vstack([np.zeros(3), rng.normal(size=3)]))
    assert np.all(J[:, -1] == 1.0)
    per_unit = net.n_in + 1
    for j in range(net.n_hidden):
        assert np.all(J[0, j * per_unit: j * per_unit + net.n_in] == 0.0)
    with pytest.raises(ValueError):
        jacobian(net, np.zeros((0, 3)))


# --- LM step ----------------------------------------------------------------

def test_lm_step_at_perfect_fit():
    rng = np.random.default_rng(0)
    net = init_net(2, 3, rng)
    X = rng.normal(size=(10, 2))
    y = forward(net, X)
    new, sse, mu, ok = lm_step(net, X, y, 1e-3)
    assert ok and new == net and sse == 0.0


def test_lm_step_accept_and_reject_contract():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(40, 2))
    y = np.sin(X[:, 0]) + X[:, 1] ** 2
    net = init_net(2, 4, rng)
    sse0 = float(np.sum((y - forward(net, X)) ** 2))
    seen = set()
    mu = 1e-3
    for _ in range(40):
        new, sse, mu_next, ok = lm_step(net, X, y, mu)
        seen.add(ok)
        if ok:
            assert sse < sse0
            assert mu_next == pytest.approx(mu * 0.1)
            net, sse0 = new, sse
        else:
            assert new is net and sse == pytest.approx(sse0, rel=1e-12)
            assert mu_next == pytest.approx(mu * 10.0)
        mu = mu_next
    assert seen == {True, False}
    with pytest.raises(ValueError):
        lm_step(net, X, y, 0.0)


def test_gradient_descent_limit_for_large_damping():
    rng = np.random.default_rng(8)
    net = init_net(2, 3, rng)
    X = rng.normal(size=(30, 2))
    y = rng.normal(size=30)
    J = jacobian(net, X)
    e = y - forward(net, X)
    g = J.T @ e
    d8 = mlp._damped_solve(J.T @ J, g, 1e8)
    d9 = mlp._damped_solve(J.T @ J, g, 1e9)
    assert d8 == pytest.approx(g / 1e8, rel=1e-5)
    assert d8 / d9 == pytest.approx(np.full(g.size, 10.0), rel=1e-6)


def test_singular_damped_system():
    with pytest.raises(SingularSystem):
        mlp._damped_solve(np.zeros((3, 3)), np.ones(3), -1.0)


# --- training ---------------------------------------------------------------

def test_noise_free_linear_target():
    tr, va, te = linear_problem()
    res = train(3, tr, va, te, TrainConfig(max_epochs=199, seed=3))
    assert res.mse < 1e-5
    assert res.epochs_run < 200


def test_accepted_epochs_strictly_reduce_training_error():
    tr, va, te = linear_problem(seed=2)
    res = train(4, tr, va, te, TrainConfig(max_epochs=60, seed=1))
    train_mse = [h[1] for h in res.history]
    assert all(b < a for a, b in zip(train_mse, train_mse[1:]))


def overfit_problem(seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(300, 3))
    y = rng.normal(size=300)
    return (X[:30], y[:30]), (X[30:100], y[30:100]), (X[100:], y[100:])


def test_early_stopping_on_noise_and_best_snapshot():
    tr, va, te = overfit_problem()
    res = train(15, tr, va, te, TrainConfig(seed=3, patience=6), keep_snapshots=True)
    assert res.epochs_run < 200
    Xv, yv = va
    val = [float(np.mean((yv - forward(s, Xv)) ** 2)) for s in res.snapshots]
    assert min(val) == pytest.approx(res.val_mse, rel=1e-9)
    best = int(np.argmin(val))
    assert res.snapshots[best] == res.net
    assert res.best_epoch == best


def test_training_is_deterministic():
    tr, va, te = overfit_problem(1)
    a = train(5, tr, va, te, TrainConfig(seed=9))
    b = train(5, tr, va, te, TrainConfig(seed=9))
    assert a == b
    c = train(5, tr, va, te, TrainConfig(seed=10))
    assert c != a


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), h=st.integers(1, 6))
def test_mae_squared_bounded_by_mse(seed, h):
    tr, va, te = overfit_problem(seed % 7)
    res = train(h, tr, va, te, TrainConfig(seed=seed, max_epochs=20))
    assert res.mae ** 2 <= res.mse * (1 + 1e-12)


def test_no_progress_when_damping_cap_is_below_start():
    tr, va, te = linear_problem()
    with pytest.raises(NoProgress):
        train(2, tr, va, te, TrainConfig(mu0=1.0, mu_max=0.5))


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(mu_dec=2.0)
    with pytest.raises(ValueError):
        TrainConfig(patience=0)
    tr, va, te = linear_problem()
    with pytest.raises(ValueError):
        train(2, tr, va, (np.zeros((0, 1)), np.zeros(0)))


def test_inference_time_is_measured_when_requested():
    tr, va, te = linear_problem()
    res = train(2, tr, va, te, TrainConfig(max_epochs=5, time_reps=50))
    assert res.infer_time > 0
    assert mlp.measure_infer_time(res.net, te[0], reps=10) > 0


def test_net_file_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    net = init_net(2, 5, rng, Scale.fit(rng.normal(size=(9, 2))), Scale.fit(rng.normal(size=9)))
    path = tmp_path / "n.net"
    save_net(net, path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# exfl-mlp") and lines[1] == "2 5"
    assert load_net(path) == net
    (tmp_path / "bad.net").write_text("junk\n")
    with pytest.raises(ValueError):
        load_net(tmp_path / "bad.net")


# --- sweep and comparison ---------------------------------------------------

LINEAR = ModelSpec("LIN", ("dVq",))


def test_single_cell_sweep():
    sw = grow_sweep(LINEAR, linear_problem(), range(1, 2), 1, TrainConfig(max_epochs=10))
    assert list(sw.cells) == [(1, 0)]
    assert sw.cells[(1, 0)] is sw.best


def test_sweep_on_linear_target_and_curve_shape():
    sw = grow_sweep(LINEAR, linear_problem(), range(1, 6), 2, TrainConfig(max_epochs=100))
    assert sw.best.mse < 1e-5
    per = sw.best_per_size()
    assert sorted(per) == [1, 2, 3, 4, 5]
    curve = [per[h].mse for h in sorted(per)]
    assert min(curve) == sw.best.mse
    assert curve[0] >= min(curve)


def test_sweep_selection_rule():
    sw = grow_sweep(LINEAR, overfit_problem(), range(1, 4), 3, TrainConfig(max_epochs=15))
    ok = [r for _, r in sw.results()]
    key = min((r.mse, r.mae, r.hidden_size) for r in ok)
    assert (sw.best.mse, sw.best.mae, sw.best.hidden_size) == key


def test_sweep_serial_equals_concurrent():
    parts = overfit_problem(2)
    cfg = TrainConfig(max_epochs=10, seed=4)
    a = grow_sweep(LINEAR, parts, range(1, 4), 2, cfg, workers=1)
    b = grow_sweep(LINEAR, parts, range(1, 4), 2, cfg, workers=2)
    assert a == b


def test_sweep_records_failures_and_empty_sweep():
    cfg = TrainConfig(mu0=1.0, mu_max=0.5)
    with pytest.raises(SweepEmpty):
        grow_sweep(LINEAR, linear_problem(), range(1, 3), 2, cfg)
    with pytest.raises(ValueError):
        grow_sweep(LINEAR, linear_problem(), range(1, 1), 1)


def test_cell_seeds_differ():
    seeds = {mlp.cell_seed(0, h, r) for h in range(1, 31) for r in range(30)}
    assert len(seeds) == 900


def toy_dataset(n, seed):
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n):
        a, b, c = rng.normal(size=3)
        rows.append(FeatureRow(a, 1.0, 0.5, 0.1, b, c, 2 * b + np.tanh(c) + 0.01 * rng.normal(), "A", t=float(i)))
    return Dataset(rows)


def test_compare_models_table():
    parts = [toy_dataset(n, s) for n, s in ((120, 0), (40, 1), (40, 2))]
    models = [ModelSpec("M7", ("dVt", "delta")), ModelSpec("M8", ("dVq", "delta"))]
    rows, sweeps = compare_models(models, parts, range(1, 3), 2, TrainConfig(max_epochs=30), time_reps=20)
    assert [r.model_id for r in rows] == ["M7", "M8"]
    m8 = rows[1]
    assert m8.mse <= m8.sr_mse
    assert m8.infer_time > 0
    assert sweeps["M8"].best.hidden_size == m8.hidden
    again, _ = compare_models(models, parts, range(1, 3), 2, TrainConfig(max_epochs=30), time_reps=0)
    assert [(r.mse, r.mae, r.hidden, r.sr_mse) for r in again] == [(r.mse, r.mae, r.hidden, r.sr_mse) for r in rows]
    with pytest.raises(ValueError):
        compare_models(models[:1], parts)
