"""Feature rows from simulation traces, stratified sampling and splits."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateSplit, EmptyTrace, InsufficientRows, QrefUndefined

FEATURES = ("dVt", "omega", "P", "Q", "dVq", "delta")
TARGET = "Vf"
CSV_HEADER = ("dVt", "omega", "P", "Q", "dVq", "delta", "Vf", "scenario_id", "flagged")


@dataclass(frozen=True)
class FeatureRow:
    dVt: float
    omega: float
    P: float
    Q: float
    dVq: float
    delta: float
    Vf: float
    scenario_id: str
    flagged: bool = False
    t: float = field(default=float("nan"), compare=False)  # not persisted to CSV

    @property
    def scenario_class(self):
        return scenario_class(self.scenario_id)


def scenario_class(scenario_id):
    """Disturbance class of a scenario id such as ``"VREF_STEP/+10"``."""
    return scenario_id.split("/", 1)[0]


@dataclass
class Dataset:
    rows: list
    provenance: dict = field(default_factory=dict)
    seed: int | None = None

    def __len__(self):
        return len(self.rows)

    def column(self, name) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def matrix(self, names) -> np.ndarray:
        return np.column_stack([self.column(n) for n in names]) if names else np.empty((len(self.rows), 0))

    def classes(self):
        return list(dict.fromkeys(r.scenario_class for r in self.rows))

    def subset(self, indices, **prov):
        return Dataset([self.rows[i] for i in indices], {**self.provenance, **prov}, self.seed)


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.70
    val_frac: float = 0.15
    test_frac: float = 0.15
    seed: int = 0

    def __post_init__(self):
        fr = (self.train_frac, self.val_frac, self.test_frac)
        if min(fr) <= 0:
            raise ValueError("each split fraction must be positive")
        if abs(sum(fr) - 1.0) > 1e-12:
            raise ValueError(f"split fractions must sum to 1, got {sum(fr)!r}")


def quadrature_reference(V_d):
    if V_d * V_d > 1.0:
        raise QrefUndefined(f"V_d={V_d} exceeds 1 pu; quadrature reference undefined")
    return math.sqrt(1.0 - V_d * V_d)


def derive_features(signals, V_ref, scenario_id="", policy="clamp"):
    """One FeatureRow from a simulated sample.

    ``policy`` handles V_d^2 > 1: ``"clamp"`` sets the quadrature reference to
    zero and flags the row, ``"raise"`` propagates QrefUndefined.
    """
    flagged = False
    try:
        vq_ref = quadrature_reference(signals.V_d)
    except QrefUndefined:
        if policy != "clamp":
            raise
        vq_ref, flagged = 0.0, True
    return FeatureRow(
        dVt=V_ref - signals.V_T,
        omega=signals.omega,
        P=signals.P,
        Q=signals.Q,
        dVq=vq_ref - signals.V_q,
        delta=signals.delta,
        Vf=signals.V_f,
        scenario_id=scenario_id,
        flagged=flagged,
        t=signals.t,
    )


def pool_scenarios(traces, v_refs=None, policy="clamp"):
    """Concatenate every sample of every trace, trace order then time order.

    ``v_refs`` gives one reference voltage per trace; by default each trace's
    pre-disturbance AVR reference is used.
    """
    if not traces:
        raise EmptyTrace("no traces to pool")
    rows, flagged = [], {}
    for k, tr in enumerate(traces):
        if len(tr.signals) == 0:
            raise EmptyTrace(f"trace {tr.scenario_id!r} has no samples")
        v_ref = tr.vref_schedule[0][1] if v_refs is None else v_refs[k]
        n_flag = 0
        for s in tr.signals:
            row = derive_features(s, v_ref, tr.scenario_id, policy)
            n_flag += row.flagged
            rows.append(row)
        flagged[tr.scenario_id] = n_flag
    keys = [(r.scenario_id, r.t) for r in rows]
    if len(set(keys)) != len(keys):
        raise ValueError("duplicated (scenario_id, t) pairs while pooling")
    prov = {
        "traces": [tr.scenario_id for tr in traces],
        "flagged": flagged,
        "flagged_total": sum(flagged.values()),
        "rows": len(rows),
    }
    return Dataset(rows, prov)


def largest_remainder(total, weights):
    """Integer allocation of ``total`` proportional to ``weights``.

    Leftover units go to the largest fractional parts; ties favour the
    earlier position.
    """
    wsum = float(sum(weights))
    quotas = [total * w / wsum for w in weights]
    base = [int(math.floor(q)) for q in quotas]
    left = total - sum(base)
    order = sorted(range(len(weights)), key=lambda i: (-(quotas[i] - base[i]), i))
    for i in order[:left]:
        base[i] += 1
    return base


def stratified_subsample(data, n, seed, exclude_flagged=True):
    """Draw ``n`` rows without replacement, proportionally per disturbance class."""
    eligible = [i for i, r in enumerate(data.rows) if not (exclude_flagged and r.flagged)]
    if n > len(eligible):
        raise InsufficientRows(f"requested {n} rows but only {len(eligible)} eligible")
    if n <= 0:
        raise InsufficientRows("sample size must be positive")
    by_class = {}
    for i in eligible:
        by_class.setdefault(data.rows[i].scenario_class, []).append(i)
    classes = list(by_class)
    alloc = largest_remainder(n, [len(by_class[c]) for c in classes])
    rng = np.random.default_rng(seed)
    picked = []
    for c, k in zip(classes, alloc):
        members = np.asarray(by_class[c])
        picked.extend(int(i) for i in rng.choice(members, size=k, replace=False))
    out = data.subset(picked, sampled_from=len(data), sample_seed=seed,
                      allocation=dict(zip(classes, alloc)))
    out.seed = seed
    return out


def split(data, spec):
    """Partition into shuffled train / validation / test parts."""
    n = len(data)
    if n == 0:
        raise DegenerateSplit("empty dataset")
    sizes = largest_remainder(n, [spec.train_frac, spec.val_frac, spec.test_frac])
    if min(sizes) == 0:
        raise DegenerateSplit(f"split sizes {sizes} leave a part empty")
    perm = np.random.default_rng(spec.seed).permutation(n)
    a, b = sizes[0], sizes[0] + sizes[1]
    parts = (perm[:a], perm[a:b], perm[b:])
    names = ("train", "validation", "test")
    return tuple(data.subset([int(i) for i in p], part=nm, split_seed=spec.seed) for p, nm in zip(parts, names))


# ---------------------------------------------------------------------------
# CSV


def write_dataset_csv(data, path, config_hash=None):
    with Path(path).open("w", newline="") as fh:
        if config_hash is not None:
            fh.write(f"# config={config_hash}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in data.rows:
            w.writerow([format(getattr(r, f), ".17g") for f in CSV_HEADER[:7]] + [r.scenario_id, int(r.flagged)])


def read_dataset_csv(path):
    path = Path(path)
    rows = []
    with path.open() as fh:
        body = [ln for ln in fh.read().splitlines() if ln and not ln.startswith("#")]
    reader = csv.reader(body)
    header = tuple(next(reader))
    if header != CSV_HEADER:
        raise ValueError(f"{path}: unexpected dataset header {header}")
    seen = {}
    for rec in reader:
        sid = rec[7]
        # no time column in the file; keep rows distinct by their ordinal per scenario
        k = seen.get(sid, 0)
        seen[sid] = k + 1
        rows.append(FeatureRow(*(float(v) for v in rec[:7]), scenario_id=sid, flagged=bool(int(rec[8])), t=float(k)))
    return Dataset(rows, {"source": str(path), "rows": len(rows)})
