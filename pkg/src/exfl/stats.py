"""Filter-style feature screening: correlation, OLS diagnostics, VIF, residuals."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from statistics import NormalDist

import numpy as np

from .errors import ConstantSeries, LengthMismatch, NoFeatureQualifies, RankDeficient

RANK_TOL = 1e-10
HIST_BIN_WIDTH = 0.5


# ---------------------------------------------------------------------------
# Student-t tail via the regularized incomplete beta function


def _betacf(a, b, x, max_iter=500, eps=1e-16):
    """Continued fraction for I_x(a, b) (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def betainc_reg(a, b, x, y=None):
    """Regularized incomplete beta I_x(a, b) for a, b > 0 and 0 <= x <= 1.

    ``y`` may carry 1 - x computed without cancellation by the caller.
    """
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    y = 1.0 - x if y is None else y
    if x == 0.0 or y == 0.0:
        return 0.0 if x == 0.0 else 1.0
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log(y))
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, y) / b


def t_two_sided_p(t, df):
    """P(|T| >= |t|) for Student's t with ``df`` degrees of freedom."""
    if math.isnan(t):
        return float("nan")
    if math.isinf(t):
        return 0.0
    t2 = t * t
    return min(1.0, betainc_reg(df / 2.0, 0.5, df / (df + t2), t2 / (df + t2)))


# ---------------------------------------------------------------------------
# correlation


@dataclass(frozen=True)
class CorrelationEntry:
    feature: str
    r: float
    t_stat: float
    p_value: float
    n: int


def pearson(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise LengthMismatch(f"lengths differ: {x.size} vs {y.size}")
    if x.size < 3:
        raise LengthMismatch("need at least 3 paired values")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise ConstantSeries("zero variance series")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def correlation_significance(r, n):
    """t statistic and two-tailed p-value for H0: rho = 0."""
    if n < 3:
        raise ValueError("n must be at least 3")
    if abs(r) > 1.0:
        raise ValueError("|r| must not exceed 1")
    if abs(r) == 1.0:
        return math.copysign(math.inf, r), 0.0
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return t, t_two_sided_p(t, n - 2)


def correlation_table(data, features, target="Vf"):
    y = data.column(target)
    out = []
    for f in features:
        r = pearson(data.column(f), y)
        t, p = correlation_significance(r, len(y))
        out.append(CorrelationEntry(f, r, t, p, len(y)))
    return out


# ---------------------------------------------------------------------------
# regression


@dataclass(frozen=True)
class ModelSpec:
    id: str
    features: tuple
    target: str = "Vf"

    def __post_init__(self):
        if not self.features:
            raise ValueError("model needs at least one feature")
        if len(set(self.features)) != len(self.features):
            raise ValueError(f"duplicate features in {self.features}")


@dataclass
class RegressionFit:
    features: tuple
    beta0: float
    betas: np.ndarray
    se: np.ndarray  # intercept first, then one per feature
    t_stats: np.ndarray
    p_values: np.ndarray
    R2: float
    R2_adj: float
    S: float
    vif: dict
    residuals: np.ndarray
    fitted: np.ndarray
    n: int
    p: int
    model_id: str = ""

    def coef(self, name):
        return float(self.betas[self.features.index(name)])

    def p_value(self, name):
        return float(self.p_values[1 + self.features.index(name)])

    def predict(self, X):
        return self.beta0 + np.asarray(X, dtype=float) @ self.betas


def _design(X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return X, np.column_stack([np.ones(X.shape[0]), X])


def _check_rank(Xd):
    s = np.linalg.svd(Xd, compute_uv=False)
    if s[0] == 0.0 or s[-1] / s[0] < RANK_TOL:
        raise RankDeficient(f"design matrix is rank deficient (sigma_min/sigma_max={s[-1] / s[0] if s[0] else 0:.3e})")


def _r2_aux(X, y):
    """R^2 of y on X with intercept; inf-safe helper for VIF."""
    _, Xd = _design(X)
    _check_rank(Xd)
    q, r = np.linalg.qr(Xd)
    b = np.linalg.solve(r, q.T @ y)
    e = y - Xd @ b
    dy = y - y.mean()
    ss_tot = float(dy @ dy)
    if ss_tot == 0.0:
        raise ConstantSeries("constant auxiliary response")
    return 1.0 - float(e @ e) / ss_tot


def vif_arrays(X, names=None):
    X, _ = _design(X)
    p = X.shape[1]
    names = list(names) if names is not None else [f"x{j}" for j in range(p)]
    if p == 1:
        return {names[0]: 1.0}
    out = {}
    for j in range(p):
        others = np.delete(X, j, axis=1)
        try:
            r2 = _r2_aux(others, X[:, j])
        except RankDeficient:
            out[names[j]] = math.inf
            continue
        out[names[j]] = math.inf if r2 >= 1.0 - 1e-15 else 1.0 / (1.0 - r2)
    return out


def vif(data, features):
    """Variance inflation factor per feature (1 for single-feature sets)."""
    return vif_arrays(data.matrix(list(features)), features)


def ols_arrays(X, y, names=None, model_id=""):
    X, Xd = _design(X)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if y.shape[0] != n:
        raise LengthMismatch("X and y row counts differ")
    if n <= p + 1:
        raise ValueError(f"need n > p + 1 (n={n}, p={p})")
    names = tuple(names) if names is not None else tuple(f"x{j}" for j in range(p))
    _check_rank(Xd)
    q, r = np.linalg.qr(Xd)
    b = np.linalg.solve(r, q.T @ y)
    fitted = Xd @ b
    e = y - fitted
    dof = n - p - 1
    ss_res = float(e @ e)
    dy = y - y.mean()
    ss_tot = float(dy @ dy)
    if ss_tot == 0.0:
        raise ConstantSeries("constant response")
    S = math.sqrt(ss_res / dof)
    R2 = min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    R2_adj = 1.0 - (1.0 - R2) * (n - 1) / dof
    r_inv = np.linalg.inv(r)
    se = S * np.sqrt(np.sum(r_inv * r_inv, axis=1))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, b / np.where(se > 0, se, 1.0), np.where(b == 0, 0.0, np.sign(b) * np.inf))
    pv = np.array([t_two_sided_p(float(ti), dof) for ti in t])
    return RegressionFit(
        features=names, beta0=float(b[0]), betas=b[1:].copy(), se=se, t_stats=t, p_values=pv,
        R2=R2, R2_adj=R2_adj, S=S, vif=vif_arrays(X, names), residuals=e, fitted=fitted,
        n=n, p=p, model_id=model_id,
    )


def ols_fit(data, model):
    return ols_arrays(data.matrix(list(model.features)), data.column(model.target),
                      model.features, model.id)


# ---------------------------------------------------------------------------
# residual assessment


@dataclass
class AssessmentReport:
    std_residuals: np.ndarray
    coverage_pm2: float
    passes_95: bool
    histogram: tuple  # (edges, counts)
    normal_plot_points: list  # (theoretical quantile, ordered std residual)
    fitted: np.ndarray = field(default=None)


def _histogram(z):
    lo = math.floor(z.min() / HIST_BIN_WIDTH) * HIST_BIN_WIDTH
    hi = math.ceil(z.max() / HIST_BIN_WIDTH) * HIST_BIN_WIDTH
    if hi <= lo:
        hi = lo + HIST_BIN_WIDTH
    nbins = int(round((hi - lo) / HIST_BIN_WIDTH))
    edges = lo + HIST_BIN_WIDTH * np.arange(nbins + 1)
    counts, _ = np.histogram(z, bins=edges)
    return edges, counts


def normal_quantiles(n):
    nd = NormalDist()
    return np.array([nd.inv_cdf((i - 0.5) / n) for i in range(1, n + 1)])


def assess_residuals(residuals, S, fitted=None):
    e = np.asarray(residuals, dtype=float)
    n = e.size
    if S == 0.0:
        z = np.zeros(n)
        coverage = 1.0
    else:
        if n < 10:
            raise ValueError("residual assessment needs at least 10 residuals")
        z = e / S
        coverage = float(np.mean(np.abs(z) <= 2.0))
    points = list(zip(normal_quantiles(n).tolist(), np.sort(z).tolist()))
    return AssessmentReport(z, coverage, coverage >= 0.95, _histogram(z), points, fitted)


def assess(fit):
    return assess_residuals(fit.residuals, fit.S, fit.fitted)


# ---------------------------------------------------------------------------
# model enumeration and forward selection


def enumerate_paper_models():
    sets = [
        ("dVq",), ("dVt",),
        ("dVq", "Q"), ("dVt", "P"), ("dVq", "P"), ("dVt", "Q"),
        ("dVt", "delta"), ("dVq", "delta"),
    ]
    return [ModelSpec(f"MODEL_{i}", s) for i, s in enumerate(sets, start=1)]


def paper_model(model_id):
    """Look up MODEL_k by id; accepts ``"M8"``, ``"8"`` or ``"MODEL_8"``."""
    key = str(model_id).upper().replace("MODEL_", "").lstrip("M")
    for m in enumerate_paper_models():
        if m.id == f"MODEL_{key}":
            return m
    raise KeyError(f"unknown model id {model_id!r}")


def forward_select(data, candidates, alpha=0.05, vif_cap=10.0, target="Vf", history=None):
    """Greedy forward selection gated by coefficient significance and VIF."""
    if not candidates:
        raise ValueError("no candidate features")
    if not 0.0 < alpha < 1.0 or vif_cap < 1.0:
        raise ValueError("alpha must lie in (0, 1) and vif_cap >= 1")
    remaining = sorted(candidates)
    selected = []
    current = -math.inf
    y = data.column(target)
    while remaining:
        best = None
        for c in remaining:
            feats = selected + [c]
            try:
                fit = ols_arrays(data.matrix(feats), y, feats)
            except (RankDeficient, ValueError):
                continue
            if fit.p_value(c) >= alpha:
                continue
            if any(v > vif_cap for v in fit.vif.values()):
                continue
            if best is None or fit.R2_adj > best[1].R2_adj:
                best = (c, fit)
        if best is None:
            if not selected:
                raise NoFeatureQualifies(f"no candidate passes alpha={alpha} / VIF<={vif_cap}")
            break
        if best[1].R2_adj < current:
            break
        c, fit = best
        selected.append(c)
        remaining.remove(c)
        current = fit.R2_adj
        if history is not None:
            history.append((c, fit.R2_adj, fit.p_value(c)))
    return ModelSpec("FORWARD", tuple(selected), target)
