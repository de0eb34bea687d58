"""One-hidden-layer perceptron trained by Levenberg-Marquardt.

Hidden units are logistic, the output unit is affine.  Inputs and target are
mapped to [-1, 1] with ranges fitted on the training split; all training
quantities (Jacobian, SSE, damping) live in that normalized space while the
reported errors are in original target units.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, NoProgress, SingularSystem, SweepEmpty

NET_FILE_MAGIC = "exfl-mlp 1"


@dataclass(frozen=True)
class Scale:
    """Per-dimension affine map x -> (x - center) / half_range."""

    center: np.ndarray
    half_range: np.ndarray

    @classmethod
    def fit(cls, values):
        v = np.asarray(values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        lo, hi = v.min(axis=0), v.max(axis=0)
        half = (hi - lo) / 2.0
        half = np.where(half > 0, half, 1.0)
        return cls((hi + lo) / 2.0, half)

    @classmethod
    def identity(cls, dim):
        return cls(np.zeros(dim), np.ones(dim))

    def normalize(self, x):
        return (np.asarray(x, dtype=float) - self.center) / self.half_range

    def denormalize(self, z):
        return np.asarray(z, dtype=float) * self.half_range + self.center

    def __eq__(self, other):
        return (isinstance(other, Scale) and np.array_equal(self.center, other.center)
                and np.array_equal(self.half_range, other.half_range))


@dataclass(frozen=True)
class MlpNet:
    n_in: int
    n_hidden: int
    W1: np.ndarray  # (n_hidden, n_in + 1), last column is the bias
    W2: np.ndarray  # (n_hidden + 1,), last entry is the bias
    input_scale: Scale
    target_scale: Scale

    def __post_init__(self):
        if self.n_hidden < 1:
            raise ValueError("n_hidden must be >= 1")
        if self.W1.shape != (self.n_hidden, self.n_in + 1) or self.W2.shape != (self.n_hidden + 1,):
            raise DimensionMismatch("weight shapes do not match n_in / n_hidden")

    @property
    def n_weights(self):
        return self.W1.size + self.W2.size

    def flat(self):
        return np.concatenate([self.W1.ravel(), self.W2])

    def with_flat(self, w):
        k = self.W1.size
        return replace(self, W1=w[:k].reshape(self.W1.shape).copy(), W2=w[k:].copy())

    def __eq__(self, other):
        return (isinstance(other, MlpNet) and self.n_in == other.n_in and self.n_hidden == other.n_hidden
                and np.array_equal(self.W1, other.W1) and np.array_equal(self.W2, other.W2)
                and self.input_scale == other.input_scale and self.target_scale == other.target_scale)


def sigmoid(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


def init_net(n_in, n_hidden, rng, input_scale=None, target_scale=None, low=-0.5, high=0.5):
    W1 = rng.uniform(low, high, size=(n_hidden, n_in + 1))
    W2 = rng.uniform(low, high, size=n_hidden + 1)
    return MlpNet(n_in, n_hidden, W1, W2,
                  input_scale or Scale.identity(n_in), target_scale or Scale.identity(1))


def _forward_norm(net, Xn):
    A = Xn @ net.W1[:, :-1].T + net.W1[:, -1]
    Hh = sigmoid(A)
    return Hh @ net.W2[:-1] + net.W2[-1], Hh


def forward(net, x):
    """Prediction in original target units for one row or a batch."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != net.n_in:
        raise DimensionMismatch(f"expected {net.n_in} inputs, got {x.shape[-1]}")
    single = x.ndim == 1
    Xn = net.input_scale.normalize(np.atleast_2d(x))
    yn, _ = _forward_norm(net, Xn)
    y = net.target_scale.denormalize(yn[:, None])[:, 0]
    return float(y[0]) if single else y


def _jacobian_norm(net, Xn):
    """Rows: samples; columns: d y_norm / d w, w ordered as net.flat()."""
    _, Hh = _forward_norm(net, Xn)
    n = Xn.shape[0]
    Xt = np.column_stack([Xn, np.ones(n)])
    g = Hh * (1.0 - Hh) * net.W2[:-1]  # (n, H)
    J1 = (g[:, :, None] * Xt[:, None, :]).reshape(n, -1)
    J2 = np.column_stack([Hh, np.ones(n)])
    return np.hstack([J1, J2])


def jacobian(net, batch):
    """Analytic Jacobian of the normalized prediction for raw input rows."""
    batch = np.atleast_2d(np.asarray(batch, dtype=float))
    if batch.shape[0] == 0:
        raise ValueError("empty batch")
    if batch.shape[1] != net.n_in:
        raise DimensionMismatch(f"expected {net.n_in} inputs, got {batch.shape[1]}")
    return _jacobian_norm(net, net.input_scale.normalize(batch))


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 200
    mu0: float = 1e-3
    mu_dec: float = 0.1
    mu_inc: float = 10.0
    mu_max: float = 1e10
    patience: int = 6
    seed: int = 0
    time_reps: int = 0  # 0 skips the wall-clock inference measurement

    def __post_init__(self):
        if not self.mu_dec < 1.0 < self.mu_inc:
            raise ValueError("require mu_dec < 1 < mu_inc")
        if self.patience < 1 or self.max_epochs < 1:
            raise ValueError("patience and max_epochs must be >= 1")


def _damped_solve(JtJ, Jte, mu):
    A = JtJ + mu * np.eye(JtJ.shape[0])
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"damped normal matrix not positive definite (mu={mu:.3e})") from exc
    z = np.linalg.solve(L, Jte)
    dw = np.linalg.solve(L.T, z)
    if not np.all(np.isfinite(dw)):
        raise SingularSystem("non-finite LM update")
    return dw


def _sse(net, Xn, tn):
    yn, _ = _forward_norm(net, Xn)
    e = tn - yn
    return float(e @ e), e


def lm_step(net, X, y, mu, config=TrainConfig()):
    """One damped Gauss-Newton attempt on raw rows ``X``/targets ``y``.

    Returns (net', sse', mu', accepted); SSE is measured in normalized
    target space.  A rejected attempt leaves the net unchanged.
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    Xn = net.input_scale.normalize(np.atleast_2d(X))
    tn = net.target_scale.normalize(np.asarray(y, dtype=float)[:, None])[:, 0]
    sse, e = _sse(net, Xn, tn)
    if sse == 0.0:
        return net, sse, mu * config.mu_dec, True
    J = _jacobian_norm(net, Xn)
    dw = _damped_solve(J.T @ J, J.T @ e, mu)
    cand = net.with_flat(net.flat() + dw)
    sse_new, _ = _sse(cand, Xn, tn)
    if sse_new < sse:
        return cand, sse_new, mu * config.mu_dec, True
    return net, sse, mu * config.mu_inc, False


@dataclass
class TrainResult:
    net: MlpNet
    epochs_run: int
    mae: float
    mse: float
    infer_time: float = field(default=float("nan"), compare=False)
    restart_index: int = 0
    hidden_size: int = 0
    train_mse: float = float("nan")
    val_mse: float = float("nan")
    best_epoch: int = 0
    history: list = field(default_factory=list)  # (epoch, train_mse, val_mse, accepted)
    snapshots: list = field(default=None, compare=False, repr=False)
    status: str = "ok"


def _as_xy(part, features, target):
    if isinstance(part, tuple):
        X, y = part
        return np.atleast_2d(np.asarray(X, dtype=float)), np.asarray(y, dtype=float)
    return part.matrix(list(features)), part.column(target)


def measure_infer_time(net, X, reps=10_000):
    """Mean wall-clock seconds of one forward pass over ``X``."""
    X = np.atleast_2d(X)
    forward(net, X)
    t0 = time.perf_counter()
    for _ in range(reps):
        forward(net, X)
    return (time.perf_counter() - t0) / reps


def train(n_hidden, train_part, val_part, test_part, config=TrainConfig(), features=None,
          target="Vf", keep_snapshots=False, restart_index=0):
    """Train one network with validation early stopping.

    Parts are Datasets (with ``features``) or (X, y) tuples.  The returned
    net is the snapshot with the lowest validation MSE seen.
    """
    Xtr, ytr = _as_xy(train_part, features, target)
    Xva, yva = _as_xy(val_part, features, target)
    Xte, yte = _as_xy(test_part, features, target)
    if min(len(ytr), len(yva), len(yte)) == 0:
        raise ValueError("all three splits must be non-empty")
    for arr in (Xtr, ytr, Xva, yva, Xte, yte):
        if not np.all(np.isfinite(arr)):
            raise ValueError("non-finite feature or target values")
    rng = np.random.default_rng(config.seed)
    in_scale = Scale.fit(Xtr)
    t_scale = Scale.fit(ytr[:, None])
    net = init_net(Xtr.shape[1], n_hidden, rng, in_scale, t_scale)

    Xn, tn = in_scale.normalize(Xtr), t_scale.normalize(ytr[:, None])[:, 0]
    Xvn, tvn = in_scale.normalize(Xva), t_scale.normalize(yva[:, None])[:, 0]
    to_orig = float(t_scale.half_range[0]) ** 2

    def val_mse(nt):
        yv, _ = _forward_norm(nt, Xvn)
        d = tvn - yv
        return float(d @ d) / len(d) * to_orig

    sse, e = _sse(net, Xn, tn)
    best = (val_mse(net), 0, net, sse)
    history = [(0, sse / len(tn) * to_orig, best[0], True)]
    snapshots = [net] if keep_snapshots else None
    mu = config.mu0
    worse = 0
    epochs = 0
    for epoch in range(1, config.max_epochs + 1):
        if sse == 0.0:
            break
        J = _jacobian_norm(net, Xn)
        JtJ, Jte = J.T @ J, J.T @ e
        w = net.flat()
        accepted = False
        while mu <= config.mu_max:
            dw = _damped_solve(JtJ, Jte, mu)
            cand = net.with_flat(w + dw)
            sse_new, e_new = _sse(cand, Xn, tn)
            if sse_new < sse:
                net, sse, e = cand, sse_new, e_new
                mu *= config.mu_dec
                accepted = True
                break
            mu *= config.mu_inc
        if not accepted:
            if epoch == 1:
                raise NoProgress(f"damping exceeded mu_max={config.mu_max:g} in the first epoch")
            break
        epochs = epoch
        vm = val_mse(net)
        history.append((epoch, sse / len(tn) * to_orig, vm, True))
        if keep_snapshots:
            snapshots.append(net)
        if vm < best[0]:
            best = (vm, epoch, net, sse)
            worse = 0
        else:
            worse += 1
            if worse >= config.patience:
                break

    best_val, best_epoch, best_net, best_sse = best
    pred = forward(best_net, Xte)
    err = yte - pred
    infer = measure_infer_time(best_net, Xte, config.time_reps) if config.time_reps > 0 else float("nan")
    return TrainResult(
        net=best_net, epochs_run=epochs, mae=float(np.mean(np.abs(err))), mse=float(np.mean(err * err)),
        infer_time=infer, restart_index=restart_index, hidden_size=n_hidden,
        train_mse=best_sse / len(tn) * to_orig, val_mse=best_val, best_epoch=best_epoch,
        history=history, snapshots=snapshots,
    )


# ---------------------------------------------------------------------------
# network growing sweep


def cell_seed(seed, hidden, restart):
    """Deterministic per-cell seed derived from (seed, hidden size, restart)."""
    return int(np.random.SeedSequence([int(seed), int(hidden), int(restart)]).generate_state(1)[0])


@dataclass
class SweepResult:
    model_id: str
    cells: dict  # (hidden, restart) -> TrainResult, or str failure status
    best: TrainResult

    def results(self):
        return [(k, v) for k, v in sorted(self.cells.items()) if isinstance(v, TrainResult)]

    def best_per_size(self):
        out = {}
        for (h, _), r in self.results():
            if h not in out or _rank_key(r) < _rank_key(out[h]):
                out[h] = r
        return out


def _rank_key(r):
    return (r.mse, r.mae, r.hidden_size, r.restart_index)


def _run_cell(args):
    h, r, data, config = args
    (Xtr, ytr), (Xva, yva), (Xte, yte) = data
    cfg = replace(config, seed=cell_seed(config.seed, h, r))
    try:
        return (h, r), train(h, (Xtr, ytr), (Xva, yva), (Xte, yte), cfg, restart_index=r)
    except (SingularSystem, NoProgress, FloatingPointError) as exc:
        return (h, r), f"failed:{getattr(exc, 'code', type(exc).__name__)}"


def grow_sweep(model, splits, h_range=range(1, 31), restarts=30, config=TrainConfig(), workers=1):
    """Train every (hidden size, restart) cell and keep the lowest test-MSE net."""
    h_range = list(h_range)
    if not h_range or restarts < 1:
        raise ValueError("need a non-empty hidden range and restarts >= 1")
    data = tuple(_as_xy(p, model.features, model.target) for p in splits)
    tasks = [(h, r, data, config) for h in h_range for r in range(restarts)]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_cell, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        outcomes = [_run_cell(t) for t in tasks]
    cells = dict(sorted(outcomes))
    ok = [v for v in cells.values() if isinstance(v, TrainResult)]
    if not ok:
        raise SweepEmpty(f"every cell failed for {model.id}")
    best = min(ok, key=_rank_key)
    return SweepResult(model.id, cells, best)


@dataclass
class ComparisonRow:
    model_id: str
    features: tuple
    mae: float
    mse: float
    hidden: int
    infer_time: float
    sr_mae: float
    sr_mse: float


def compare_models(models, splits, h_range=range(1, 31), restarts=30, config=TrainConfig(), workers=1,
                   time_reps=10_000):
    """Comparison of best-of-sweep networks against OLS.

    The regression is fitted on train + validation rows and scored on the
    same test rows as the networks.
    """
    from .stats import ols_arrays

    if len(models) < 2:
        raise ValueError("compare at least two models")
    rows, sweeps = [], {}
    train_p, val_p, test_p = splits
    for m in models:
        sw = grow_sweep(m, splits, h_range, restarts, config, workers)
        sweeps[m.id] = sw
        Xtr, ytr = _as_xy(train_p, m.features, m.target)
        Xva, yva = _as_xy(val_p, m.features, m.target)
        Xte, yte = _as_xy(test_p, m.features, m.target)
        fit = ols_arrays(np.vstack([Xtr, Xva]), np.concatenate([ytr, yva]), m.features, m.id)
        e = yte - fit.predict(Xte)
        t_inf = measure_infer_time(sw.best.net, Xte, time_reps) if time_reps > 0 else float("nan")
        rows.append(ComparisonRow(m.id, tuple(m.features), sw.best.mae, sw.best.mse, sw.best.hidden_size,
                                  t_inf, float(np.mean(np.abs(e))), float(np.mean(e * e))))
    return rows, sweeps


# ---------------------------------------------------------------------------
# persistence


def save_net(net, path):
    f = lambda a: " ".join(format(float(v), ".17g") for v in np.ravel(a))
    lines = [
        f"# {NET_FILE_MAGIC}",
        f"{net.n_in} {net.n_hidden}",
        *(f(row) for row in net.W1),
        f(net.W2),
        f(net.input_scale.center),
        f(net.input_scale.half_range),
        f(net.target_scale.center),
        f(net.target_scale.half_range),
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def load_net(path):
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != f"# {NET_FILE_MAGIC}":
        raise ValueError(f"{path}: not an {NET_FILE_MAGIC} file")
    n_in, n_hidden = (int(v) for v in lines[1].split())
    nums = [np.array([float(v) for v in ln.split()]) for ln in lines[2:]]
    W1 = np.vstack(nums[:n_hidden])
    W2, ic, ih, tc, th = nums[n_hidden:n_hidden + 5]
    return MlpNet(n_in, n_hidden, W1, W2, Scale(ic, ih), Scale(tc, th))
