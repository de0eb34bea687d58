"""End-to-end study: simulate, pool, sample, analyze, sweep, compare, report.

Every stage persists its outputs under the run directory.  CSV files start
with ``# config=<sha256>`` so that any file can be traced to the resolved
configuration that produced it.
"""
from __future__ import annotations

import csv
import hashlib
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import dataset as ds
from . import mlp
from . import simulator as sim
from . import stats
from .errors import ConfigError, ExflError, StageFailure


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class ScenarioSpec:
    scenario_id: str
    events: tuple
    circuits: int = 2
    v_ref: float | None = None  # reference for dVt; None uses the pre-disturbance AVR setting


def default_scenarios():
    E = sim.DisturbanceEvent
    return (
        ScenarioSpec("VREF_STEP/+10", (E.vref_step(1.0, 0.10),)),
        ScenarioSpec("VREF_STEP/-10", (E.vref_step(1.0, -0.10),)),
        ScenarioSpec("TERMINAL_FAULT_SELF_CLEARING/120ms", (E.fault(1.0, 0.120),)),
        ScenarioSpec("TERMINAL_FAULT_CLEARED_BY_TRIP/120ms", (E.fault(1.0, 0.120, cleared_by_trip=True),)),
        ScenarioSpec("LINE_TRIP", (E("LINE_TRIP", 1.0),)),
        ScenarioSpec("LINE_RECLOSE", (E("LINE_RECLOSE", 1.0),), circuits=1),
    )


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    scenarios: tuple = field(default_factory=default_scenarios)
    machine: sim.MachineParams = field(default_factory=sim.MachineParams)
    exciter: sim.ExciterParams = field(default_factory=sim.ExciterParams)
    network: sim.NetworkParams = field(default_factory=sim.NetworkParams)
    P_target: float = 0.8
    V_T_target: float = 1.0
    t_end: float = 10.0
    dt_sample: float = 0.005
    h: float = 2e-4
    stats_sample_n: int = 50
    exclude_flagged: bool = True
    train_frac: float = 0.70
    val_frac: float = 0.15
    test_frac: float = 0.15
    mlp_rows: int = 0  # 0 trains on the full pool, otherwise a stratified draw of this size
    alpha: float = 0.05
    vif_cap: float = 10.0
    h_min: int = 1
    h_max: int = 30
    restarts: int = 30
    mlp_models: tuple = ("MODEL_7", "MODEL_8")
    train: mlp.TrainConfig = field(default_factory=mlp.TrainConfig)
    time_reps: int = 10_000
    workers: int = 1
    out: str = "runs/default"

    def __post_init__(self):
        if not self.scenarios:
            raise ConfigError("at least one scenario is required")
        if self.h_min < 1 or self.h_max < self.h_min:
            raise ConfigError(f"empty range {self.h_min}..{self.h_max}")
        if self.restarts < 1:
            raise ConfigError("restarts must be >= 1")
        if not 0 < self.alpha < 1 or self.vif_cap < 1:
            raise ConfigError("alpha must lie in (0, 1) and vif_cap >= 1")
        ids = [s.scenario_id for s in self.scenarios]
        if len(set(ids)) != len(ids):
            raise ConfigError("duplicate scenario ids")

    @property
    def h_range(self):
        return range(self.h_min, self.h_max + 1)

    @property
    def split_spec(self):
        return ds.SplitSpec(self.train_frac, self.val_frac, self.test_frac, self.seed)

    @classmethod
    def desk(cls, **kw):
        """Reduced sweep (hidden 1..15, 5 restarts) that runs in a few minutes."""
        return cls(**{"h_max": 15, "restarts": 5, **kw})


# keys that do not influence any computed number
_HASH_EXCLUDED = ("out", "workers")


def _fmt_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, complex):
        return repr(v).strip("()")
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return ",".join(_fmt_value(x) for x in v)
    return str(v)


def _fmt_events(events):
    return ";".join(f"{e.kind},{e.t_start!r},{e.duration!r},{e.magnitude!r}" for e in events)


def config_items(cfg):
    """Flat, ordered ``(key, value-string)`` pairs describing ``cfg`` completely."""
    items = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if f.name == "scenarios":
            for k, s in enumerate(v):
                items.append((f"scenario.{k}.id", s.scenario_id))
                items.append((f"scenario.{k}.events", _fmt_events(s.events)))
                items.append((f"scenario.{k}.circuits", str(s.circuits)))
                if s.v_ref is not None:
                    items.append((f"scenario.{k}.v_ref", repr(s.v_ref)))
        elif f.name in ("machine", "exciter", "network", "train"):
            for g in fields(v):
                items.append((f"{f.name}.{g.name}", _fmt_value(getattr(v, g.name))))
        else:
            items.append((f.name, _fmt_value(v)))
    return items


def render_config(cfg):
    return "".join(f"{k}={v}\n" for k, v in config_items(cfg))


def config_hash(cfg):
    text = "".join(f"{k}={v}\n" for k, v in config_items(cfg) if k not in _HASH_EXCLUDED)
    return hashlib.sha256(text.encode()).hexdigest()


def _parse_bool(s):
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _coerce(template, text):
    if isinstance(template, bool):
        return _parse_bool(text)
    if isinstance(template, int):
        return int(text)
    if isinstance(template, float):
        return float(text)
    if isinstance(template, complex):
        return complex(text.replace(" ", ""))
    if isinstance(template, tuple):
        parts = [p.strip() for p in text.split(",") if p.strip()]
        if template and isinstance(template[0], complex):
            return tuple(complex(p) for p in parts)
        return tuple(parts)
    return text.strip()


def _parse_events(text):
    events = []
    for chunk in text.split(";"):
        if not chunk.strip():
            continue
        parts = [p.strip() for p in chunk.split(",")]
        kind, t0 = parts[0], float(parts[1])
        dur = float(parts[2]) if len(parts) > 2 else 0.0
        mag = float(parts[3]) if len(parts) > 3 else 0.0
        events.append(sim.DisturbanceEvent(kind, t0, dur, mag))
    return tuple(events)


def parse_config(text, base=None):
    """Parse flat ``key=value`` text (``#`` comments, dotted keys) onto ``base``."""
    base = base or PipelineConfig()
    top, nested, scen = {}, {"machine": {}, "exciter": {}, "network": {}, "train": {}}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw.strip()!r}")
        head, _, rest = key.partition(".")
        try:
            if head == "scenario":
                idx, _, attr = rest.partition(".")
                scen.setdefault(int(idx), {})[attr] = val
            elif head in nested and rest:
                obj = getattr(base, head)
                if rest not in {f.name for f in fields(obj)}:
                    raise ConfigError(f"line {lineno}: unknown key {key!r}")
                nested[head][rest] = _coerce(getattr(obj, rest), val)
            elif key == "h_range":
                a, b = parse_range(val)
                top["h_min"], top["h_max"] = a, b
            elif key in {f.name for f in fields(base)} and key not in nested and key != "scenarios":
                top[key] = _coerce(getattr(base, key), val)
            else:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from exc
    try:
        for head, kv in nested.items():
            if kv:
                top[head] = replace(getattr(base, head), **kv)
        if scen:
            specs = []
            for k in sorted(scen):
                d = scen[k]
                if "id" not in d or "events" not in d:
                    raise ConfigError(f"scenario.{k} needs both id and events")
                specs.append(ScenarioSpec(
                    d["id"], _parse_events(d["events"]), int(d.get("circuits", 2)),
                    float(d["v_ref"]) if "v_ref" in d else None,
                ))
            top["scenarios"] = tuple(specs)
        return replace(base, **top)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path, base=None):
    return parse_config(Path(path).read_text(), base)


def parse_range(text):
    """``"a..b"`` -> (a, b); raises ConfigError("empty range") when b < a."""
    a, sep, b = str(text).partition("..")
    if not sep:
        raise ConfigError(f"range must look like a..b, got {text!r}")
    lo, hi = int(a), int(b)
    if hi < lo or lo < 1:
        raise ConfigError(f"empty range {text}")
    return lo, hi


# ---------------------------------------------------------------------------
# stages


def _stage(name):
    def wrap(fn):
        def inner(*args, **kw):
            try:
                return fn(*args, **kw)
            except StageFailure:
                raise
            except (ExflError, ValueError, OSError, np.linalg.LinAlgError) as exc:
                raise StageFailure(name, exc) from exc
        inner.__name__ = fn.__name__
        inner.__doc__ = fn.__doc__
        return inner
    return wrap


def _simulate_one(cfg, spec):
    net = replace(cfg.network, circuits_in_service=spec.circuits)
    return sim.run_scenario(cfg.machine, cfg.exciter, net, spec.events, cfg.t_end, cfg.dt_sample,
                            cfg.h, cfg.P_target, cfg.V_T_target, spec.scenario_id)


@_stage("simulate")
def simulate_stage(cfg):
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(_simulate_one, [cfg] * len(cfg.scenarios), cfg.scenarios))
    return [_simulate_one(cfg, s) for s in cfg.scenarios]


@_stage("pool")
def pool_stage(cfg, traces):
    v_refs = [s.v_ref if s.v_ref is not None else tr.vref_schedule[0][1] for s, tr in zip(cfg.scenarios, traces)]
    data = ds.pool_scenarios(traces, v_refs)
    data.seed = cfg.seed
    return data


@_stage("sample")
def sample_stage(cfg, pool):
    return ds.stratified_subsample(pool, cfg.stats_sample_n, cfg.seed, cfg.exclude_flagged)


@dataclass
class Analysis:
    correlation: list
    fits: dict  # model id -> RegressionFit
    assessments: dict  # model id -> AssessmentReport
    forward: object  # ModelSpec, or an error message string
    forward_history: list


@_stage("analyze")
def analyze_stage(cfg, sample):
    corr = stats.correlation_table(sample, ds.FEATURES, ds.TARGET)
    fits, assessments = {}, {}
    for m in stats.enumerate_paper_models():
        fit = stats.ols_fit(sample, m)
        fits[m.id] = fit
        assessments[m.id] = stats.assess(fit)
    history = []
    try:
        fwd = stats.forward_select(sample, ds.FEATURES, cfg.alpha, cfg.vif_cap, ds.TARGET, history)
    except ExflError as exc:
        fwd = f"{exc.code}: {exc}"
    return Analysis(corr, fits, assessments, fwd, history)


@_stage("split")
def split_stage(cfg, pool):
    data = pool
    if cfg.mlp_rows:
        data = ds.stratified_subsample(pool, cfg.mlp_rows, cfg.seed, cfg.exclude_flagged)
    return ds.split(data, cfg.split_spec)


@_stage("sweep")
def sweep_stage(cfg, splits):
    models = [stats.paper_model(m) for m in cfg.mlp_models]
    tcfg = replace(cfg.train, seed=cfg.seed)
    return mlp.compare_models(models, splits, cfg.h_range, cfg.restarts, tcfg, cfg.workers, cfg.time_reps)


# ---------------------------------------------------------------------------
# persistence


def _g(v):
    return format(float(v), ".17g")


def _csv_text(header, rows, chash):
    buf = io.StringIO()
    buf.write(f"# config={chash}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _safe_name(scenario_id):
    return "".join(c if c.isalnum() or c in "+-_" else "_" for c in scenario_id)


def correlation_rows(corr):
    return [[c.feature, _g(c.r), _g(c.t_stat), _g(c.p_value), str(c.n)] for c in corr]


def regression_rows(fits):
    rows = []
    for mid, fit in fits.items():
        common = [_g(fit.S), _g(fit.R2), _g(fit.R2_adj)]
        rows.append([mid, "(intercept)", _g(fit.beta0), _g(fit.p_values[0]), "", *common])
        for j, f in enumerate(fit.features):
            rows.append([mid, f, _g(fit.betas[j]), _g(fit.p_values[j + 1]), _g(fit.vif[f]), *common])
    return rows


def assessment_rows(report):
    z = report.std_residuals
    order = np.argsort(z, kind="stable")
    q = stats.normal_quantiles(len(z))
    fitted = report.fitted if report.fitted is not None else np.full(len(z), np.nan)
    return [[_g(z[i]), _g(fitted[i]), _g(q[k])] for k, i in enumerate(order)]


SWEEP_HEADER = ("model_id", "hidden", "restart", "epochs", "train_mse", "val_mse", "test_mse", "test_mae",
                "infer_time_s", "status")
COMPARISON_HEADER = ("model_id", "features", "hidden", "ann_mae", "ann_mse", "sr_mae", "sr_mse")


def sweep_rows(sweep):
    rows = []
    for (h, r), res in sorted(sweep.cells.items()):
        if isinstance(res, mlp.TrainResult):
            rows.append([sweep.model_id, h, r, res.epochs_run, _g(res.train_mse), _g(res.val_mse), _g(res.mse),
                         _g(res.mae), "", res.status])
        else:
            rows.append([sweep.model_id, h, r, "", "", "", "", "", "", res])
    return rows


def comparison_rows(comparison):
    return [[c.model_id, "+".join(c.features), c.hidden, _g(c.mae), _g(c.mse), _g(c.sr_mae), _g(c.sr_mse)]
            for c in comparison]


def read_comparison(path):
    body = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    rec = list(csv.reader(body))
    if tuple(rec[0]) != COMPARISON_HEADER:
        raise ValueError(f"{path}: unexpected header")
    return [mlp.ComparisonRow(r[0], tuple(r[1].split("+")), float(r[3]), float(r[4]), int(r[2]), math.nan,
                              float(r[5]), float(r[6])) for r in rec[1:]]


def read_timing(path):
    out = {}
    p = Path(path)
    if p.exists():
        body = [ln for ln in p.read_text().splitlines() if ln and not ln.startswith("#")]
        for r in list(csv.reader(body))[1:]:
            out[r[0]] = float(r[1])
    return out


def write_traces(out, traces, chash):
    d = Path(out) / "traces"
    d.mkdir(parents=True, exist_ok=True)
    for tr in traces:
        sim.write_trace_csv(tr, d / f"{_safe_name(tr.scenario_id)}.csv", chash)


def write_analysis(out, analysis, chash):
    out = Path(out)
    (out / "assessment").mkdir(parents=True, exist_ok=True)
    (out / "correlation.csv").write_text(
        _csv_text(("feature", "r", "t_stat", "p_value", "n"), correlation_rows(analysis.correlation), chash))
    (out / "regression.csv").write_text(
        _csv_text(("model_id", "feature", "coef", "p_value", "vif", "S", "R2", "R2_adj"),
                  regression_rows(analysis.fits), chash))
    for mid, rep in analysis.assessments.items():
        (out / "assessment" / f"{mid}.csv").write_text(
            _csv_text(("std_residual", "fit_value", "theoretical_quantile"), assessment_rows(rep), chash))
        edges, counts = rep.histogram
        hist = [[_g(edges[i]), _g(edges[i + 1]), int(counts[i])] for i in range(len(counts))]
        (out / "assessment" / f"{mid}_histogram.csv").write_text(
            _csv_text(("bin_lo", "bin_hi", "count"), hist, chash))


def write_training(out, comparison, sweeps, chash):
    out = Path(out)
    (out / "nets").mkdir(parents=True, exist_ok=True)
    for mid, sw in sweeps.items():
        (out / f"sweep_{mid}.csv").write_text(_csv_text(SWEEP_HEADER, sweep_rows(sw), chash))
        mlp.save_net(sw.best.net, out / "nets" / f"{mid}.net")
    (out / "comparison.csv").write_text(_csv_text(COMPARISON_HEADER, comparison_rows(comparison), chash))
    # wall-clock numbers vary run to run, so they live apart from the reproducible tables
    (out / "timing.csv").write_text(
        _csv_text(("model_id", "infer_time_s"), [[c.model_id, _g(c.infer_time)] for c in comparison], chash))


# ---------------------------------------------------------------------------
# report


@dataclass
class RunReport:
    correlation: list
    fits: dict
    assessments: dict
    forward: object
    forward_history: list
    comparison: list
    sweeps: dict
    provenance: dict

    def regression_models(self):
        return list(self.fits)

    def swept_models(self):
        return [c.model_id for c in self.comparison]


def _table(header, rows):
    cells = [list(map(str, header))] + [[str(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    line = lambda r: "  ".join(c.rjust(w) if i else c.ljust(w) for i, (c, w) in enumerate(zip(r, widths)))
    return "\n".join([line(cells[0]), line(["-" * w for w in widths])] + [line(r) for r in cells[1:]])


def render_report(report):
    p = report.provenance
    parts = [
        "Excitation feature study",
        "========================",
        f"config hash : {p.get('config_hash')}",
        f"seed        : {p.get('seed')}",
        f"pooled rows : {p.get('pool_rows')} (flagged quadrature-reference rows: {p.get('flagged_total')})",
        f"sample rows : {p.get('sample_rows')}",
        f"mlp split   : {p.get('split_sizes')}",
        "",
        "Correlation with Vf",
        _table(("feature", "r", "t", "p", "n"),
               [(c.feature, f"{c.r:.4f}", f"{c.t_stat:.3f}", f"{c.p_value:.4g}", c.n) for c in report.correlation]),
        "",
        "Regression models",
    ]
    rows = []
    for mid, fit in report.fits.items():
        for j, f in enumerate(fit.features):
            rows.append((mid if j == 0 else "", f, f"{fit.betas[j]:.5g}", f"{fit.p_values[j + 1]:.4g}",
                         f"{fit.vif[f]:.3f}", f"{fit.S:.4g}" if j == 0 else "",
                         f"{100 * fit.R2:.1f}%" if j == 0 else "", f"{100 * fit.R2_adj:.1f}%" if j == 0 else ""))
    parts.append(_table(("model", "feature", "coef", "p", "VIF", "S", "R2", "R2adj"), rows))
    parts += ["", "Residual assessment (|e/S| <= 2)"]
    parts.append(_table(("model", "coverage", "passes_95"),
                        [(m, f"{a.coverage_pm2:.3f}", "yes" if a.passes_95 else "no")
                         for m, a in report.assessments.items()]))
    parts.append("")
    if isinstance(report.forward, stats.ModelSpec):
        steps = ", ".join(f"{c} (R2adj={r:.4f})" for c, r, _ in report.forward_history)
        parts.append(f"Forward selection: {' + '.join(report.forward.features)}  [{steps}]")
    else:
        parts.append(f"Forward selection: {report.forward}")
    if report.comparison:
        parts += ["", "ANN vs regression on the test split (errors in per-unit of Vf)"]
        parts.append(_table(
            ("model", "features", "HLN", "ANN MAE", "ANN MSE", "SR MAE", "SR MSE", "time [s]"),
            [(c.model_id, "+".join(c.features), c.hidden, f"{c.mae:.5g}", f"{c.mse:.5g}", f"{c.sr_mae:.5g}",
              f"{c.sr_mse:.5g}", "n/a" if math.isnan(c.infer_time) else f"{c.infer_time:.3g}")
             for c in report.comparison]))
    return "\n".join(parts) + "\n"


def _provenance(cfg, pool, sample, splits):
    return {
        "seed": cfg.seed,
        "config_hash": config_hash(cfg),
        "pool_rows": len(pool),
        "flagged_total": pool.provenance.get("flagged_total", sum(r.flagged for r in pool.rows)),
        "sample_rows": len(sample),
        "split_sizes": "/".join(str(len(s)) for s in splits) if splits else "",
    }


def run_pipeline(cfg, out=None, train=True):
    """Run every stage, persisting outputs under ``out`` (defaults to cfg.out)."""
    out = Path(out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    chash = config_hash(cfg)
    (out / "config.cfg").write_text(f"# config={chash}\n" + render_config(cfg))
    traces = simulate_stage(cfg)
    write_traces(out, traces, chash)
    pool = pool_stage(cfg, traces)
    ds.write_dataset_csv(pool, out / "dataset.csv", chash)
    sample = sample_stage(cfg, pool)
    ds.write_dataset_csv(sample, out / "sample.csv", chash)
    analysis = analyze_stage(cfg, sample)
    write_analysis(out, analysis, chash)
    comparison, sweeps, splits = [], {}, ()
    if train:
        splits = split_stage(cfg, pool)
        comparison, sweeps = sweep_stage(cfg, splits)
        write_training(out, comparison, sweeps, chash)
    report = RunReport(analysis.correlation, analysis.fits, analysis.assessments, analysis.forward,
                       analysis.forward_history, comparison, sweeps, _provenance(cfg, pool, sample, splits))
    (out / "report.txt").write_text(render_report(report))
    return report
