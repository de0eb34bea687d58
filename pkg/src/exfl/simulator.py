"""Single machine / infinite bus simulation.

Sixth-order two-axis subtransient machine, DC1A-style rotating exciter with
washout rate feedback, and a quasi-static phasor network (generator bus with a
local constant-impedance load, step-up transformer, two parallel line circuits,
infinite bus).  Integration is fixed-step classical RK4 so that a scenario is a
pure function of its inputs.

Units are per-unit on the machine base; time in seconds; angles in radians.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import InvalidEvents, NoEquilibrium, NumericDivergence, UnstableScenario

# nameplate short-circuit constants; converted to open-circuit below
_T_D_P, _T_D_PP, _T_Q_PP = 0.3, 0.04, 0.031
_XD, _XQ, _XDP, _XQP, _XDPP, _XQPP = 1.83, 1.7, 0.24, 0.43, 0.20, 0.26

DIVERGENCE_LIMIT = 1e3
STATE_NAMES = ("delta_r", "omega", "Eq_p", "Ed_p", "Eq_pp", "Ed_pp", "V_R", "E_fd", "x_f")
SIGNAL_FIELDS = ("t", "V_T", "V_d", "V_q", "omega", "delta", "P", "Q", "V_f", "E_f")
CSV_HEADER = ("t", "Vt", "Vd", "Vq", "omega", "delta", "P", "Q", "Vf", "Ef", "scenario_id")


@dataclass(frozen=True)
class MachineParams:
    X_d: float = _XD
    X_q: float = _XQ
    X_d_p: float = _XDP
    X_q_p: float = _XQP
    X_d_pp: float = _XDPP
    X_q_pp: float = _XQPP
    T_d0_p: float = _T_D_P * _XD / _XDP
    T_d0_pp: float = _T_D_PP * _XDP / _XDPP
    T_q0_pp: float = _T_Q_PP * _XQP / _XQPP
    # no q-axis transient constant on the nameplate; T'_q assumed equal to T'_d
    T_q0_p: float = _T_D_P * _XQ / _XQP
    R_stator: float = 0.003
    H: float = 3.6
    D: float = 0.0
    f_nom: float = 50.0
    S_base: float = 150e6
    V_base: float = 13.8e3
    X_s: float = _XD
    order: int = 6

    def __post_init__(self):
        if not (self.X_d > self.X_d_p > self.X_d_pp > 0):
            raise ValueError("require X_d > X_d_p > X_d_pp > 0")
        if not (self.X_q > self.X_q_p > self.X_q_pp > 0):
            raise ValueError("require X_q > X_q_p > X_q_pp > 0")
        if min(self.T_d0_p, self.T_d0_pp, self.T_q0_pp, self.T_q0_p) <= 0 or self.H <= 0:
            raise ValueError("time constants and H must be positive")
        if self.order not in (4, 6):
            raise ValueError("order must be 4 or 6")

    @classmethod
    def from_short_circuit(cls, T_d_p, T_d_pp, T_q_pp, T_q_p=None, **kw):
        """Build from short-circuit time constants using the reactance ratios."""
        probe = cls(**kw)
        T_q_p = T_d_p if T_q_p is None else T_q_p
        return replace(
            probe,
            T_d0_p=T_d_p * probe.X_d / probe.X_d_p,
            T_d0_pp=T_d_pp * probe.X_d_p / probe.X_d_pp,
            T_q0_pp=T_q_pp * probe.X_q_p / probe.X_q_pp,
            T_q0_p=T_q_p * probe.X_q / probe.X_q_p,
        )

    @property
    def Z_base(self):
        return self.V_base ** 2 / self.S_base


@dataclass(frozen=True)
class ExciterParams:
    Ka: float = 2.50
    Ta: float = 0.001
    Ke: float = 1.5
    Te: float = 0.3
    Kf: float = 1.0
    Tf: float = 0.003
    Vf_min: float = -6.0
    Vf_max: float = 6.0

    def __post_init__(self):
        if min(self.Ta, self.Te, self.Tf) <= 0:
            raise ValueError("Ta, Te, Tf must be positive")
        if not self.Vf_min < self.Vf_max:
            raise ValueError("Vf_min must be below Vf_max")


@dataclass(frozen=True)
class NetworkParams:
    """Network seen from the generator terminal.

    ``local_load`` is read according to ``load_model``: ``"pu_power"`` treats it
    as the complex power drawn at 1 pu voltage (constant impedance),
    ``"ohm"`` as a physical impedance converted on the machine base.
    """

    line_impedances: tuple = (0.3j, 0.3j)
    transformer_impedance: complex = 0.15j
    local_load: complex = 0.09 + 0.056j
    load_model: str = "pu_power"
    V_infinite_bus: float = 1.0
    fault_impedance: complex = 1e-4 + 0j
    circuits_in_service: int = 2

    def __post_init__(self):
        if len(self.line_impedances) != 2:
            raise ValueError("exactly two parallel line circuits are required")
        if not 0 <= self.circuits_in_service <= len(self.line_impedances):
            raise ValueError("circuits_in_service out of range")
        if self.load_model not in ("pu_power", "ohm"):
            raise ValueError(f"unknown load_model {self.load_model!r}")

    def load_admittance(self, machine: MachineParams) -> complex:
        if self.load_model == "ohm":
            z_pu = complex(self.local_load) / machine.Z_base
            return 1.0 / z_pu
        return complex(self.local_load).conjugate()


EVENT_KINDS = (
    "VREF_STEP",
    "TERMINAL_FAULT_SELF_CLEARING",
    "TERMINAL_FAULT_CLEARED_BY_TRIP",
    "LINE_TRIP",
    "LINE_RECLOSE",
)
FAULT_KINDS = ("TERMINAL_FAULT_SELF_CLEARING", "TERMINAL_FAULT_CLEARED_BY_TRIP")


@dataclass(frozen=True)
class DisturbanceEvent:
    kind: str
    t_start: float
    duration: float = 0.0
    magnitude: float = 0.0  # fractional V_ref change for VREF_STEP

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown disturbance kind {self.kind!r}")
        if self.t_start <= 0:
            raise ValueError("t_start must follow the initial steady state (t_start > 0)")
        if self.kind in FAULT_KINDS and self.duration <= 0:
            raise ValueError("fault duration must be positive")
        if self.duration < 0:
            raise ValueError("negative duration")

    @classmethod
    def fault(cls, t_start=1.0, duration=0.120, cleared_by_trip=False):
        kind = "TERMINAL_FAULT_CLEARED_BY_TRIP" if cleared_by_trip else "TERMINAL_FAULT_SELF_CLEARING"
        return cls(kind, t_start, duration)

    @classmethod
    def vref_step(cls, t_start=1.0, magnitude=0.10):
        return cls("VREF_STEP", t_start, 0.0, magnitude)


@dataclass(frozen=True)
class SimSignals:
    t: float
    V_T: float
    V_d: float
    V_q: float
    omega: float
    delta: float
    P: float
    Q: float
    V_f: float
    E_f: float


@dataclass(frozen=True)
class SimState:
    """Dynamic states plus the quantities the integrator holds fixed.

    ``x`` is ordered as STATE_NAMES.  ``delta_r`` is the rotor q-axis angle
    against the infinite bus; the reported load angle in SimSignals is the
    internal angle between terminal voltage and the EMF behind X_s.
    """

    t: float
    x: tuple
    V_ref: float
    T_m: float
    circuits: int = 2
    fault: bool = False

    def __getitem__(self, name):
        return self.x[STATE_NAMES.index(name)]


@dataclass
class SimTrace:
    signals: list
    scenario_id: str
    dt_sample: float
    vref_schedule: tuple = ((0.0, float("nan")),)

    def column(self, name) -> np.ndarray:
        return np.array([getattr(s, name) for s in self.signals], dtype=float)

    def v_ref_at(self, t):
        value = self.vref_schedule[0][1]
        for t0, v in self.vref_schedule:
            if t >= t0 - 1e-12:
                value = v
        return value

    def __len__(self):
        return len(self.signals)


def power_angle_p(E_f, V_T, X_s, delta):
    """Round-rotor power-angle relation, P = E_f V_T sin(delta) / X_s."""
    if X_s <= 0:
        raise ValueError("X_s must be positive")
    return E_f * V_T / X_s * math.sin(delta)


# ---------------------------------------------------------------------------
# model equations


def _thevenin(machine, network, circuits, fault):
    y_net = 0j
    if circuits > 0:
        z_lines = network.line_impedances[:circuits]
        y_lines = sum(1.0 / complex(z) for z in z_lines)
        y_net = 1.0 / (complex(network.transformer_impedance) + 1.0 / y_lines)
    y_sh = network.load_admittance(machine)
    if fault:
        y_sh += 1.0 / complex(network.fault_impedance)
    y_tot = y_net + y_sh
    v_th = network.V_infinite_bus * y_net / y_tot
    z_th = 1.0 / y_tot
    return v_th, z_th


class _Model:
    """Flattened parameters for the inner loop (plain floats, no attribute chains)."""

    def __init__(self, machine, exciter, network):
        m, e = machine, exciter
        self.machine, self.exciter, self.network = machine, exciter, network
        self.wb = 2.0 * math.pi * m.f_nom
        self.sub = m.order == 6
        self.xdpp = m.X_d_pp if self.sub else m.X_d_p
        self.xqpp = m.X_q_pp if self.sub else m.X_q_p
        self.m = m
        self.e = e
        self._th_cache = {}

    def thevenin(self, circuits, fault):
        key = (circuits, fault)
        if key not in self._th_cache:
            v, z = _thevenin(self.machine, self.network, circuits, fault)
            self._th_cache[key] = (v.real, v.imag, z.real, z.imag)
        return self._th_cache[key]

    def currents(self, x, th):
        """Solve stator + network algebra; returns (I_d, I_q, V_d, V_q)."""
        delta, _, eqp, edp, eqpp, edpp = x[0], x[1], x[2], x[3], x[4], x[5]
        if not self.sub:
            eqpp, edpp = eqp, edp
        a, b, rth, xth = th
        s, c = math.sin(delta), math.cos(delta)
        # infinite-side Thevenin voltage rotated into the rotor frame
        vd_th = a * s - b * c
        vq_th = a * c + b * s
        r = self.m.R_stator + rth
        a12 = -(self.xqpp + xth)
        a21 = self.xdpp + xth
        r1 = edpp - vd_th
        r2 = eqpp - vq_th
        det = r * r - a12 * a21
        i_d = (r * r1 - a12 * r2) / det
        i_q = (r * r2 - a21 * r1) / det
        v_d = edpp - self.m.R_stator * i_d + self.xqpp * i_q
        v_q = eqpp - self.m.R_stator * i_q - self.xdpp * i_d
        return i_d, i_q, v_d, v_q

    def derivs(self, x, th, v_ref, t_m):
        m, e = self.m, self.e
        delta, omega, eqp, edp, eqpp, edpp, vr, efd, xf = x
        i_d, i_q, v_d, v_q = self.currents(x, th)
        v_t = math.hypot(v_d, v_q)
        if self.sub:
            t_e = edpp * i_d + eqpp * i_q + (self.xqpp - self.xdpp) * i_d * i_q
        else:
            t_e = edp * i_d + eqp * i_q + (self.xqpp - self.xdpp) * i_d * i_q
        d_delta = self.wb * (omega - 1.0)
        d_omega = (t_m / omega - t_e - m.D * (omega - 1.0)) / (2.0 * m.H)
        d_eqp = (efd - eqp - (m.X_d - m.X_d_p) * i_d) / m.T_d0_p
        d_edp = (-edp + (m.X_q - m.X_q_p) * i_q) / m.T_q0_p
        if self.sub:
            d_eqpp = (eqp - eqpp - (m.X_d_p - m.X_d_pp) * i_d) / m.T_d0_pp
            d_edpp = (edp - edpp + (m.X_q_p - m.X_q_pp) * i_q) / m.T_q0_pp
        else:
            d_eqpp, d_edpp = d_eqp, d_edp
        v_fb = e.Kf / e.Tf * (efd - xf)
        d_vr = (e.Ka * (v_ref - v_t - v_fb) - vr) / e.Ta
        d_efd = (vr - e.Ke * efd) / e.Te
        # non-windup output ceiling
        if (efd >= e.Vf_max and d_efd > 0) or (efd <= e.Vf_min and d_efd < 0):
            d_efd = 0.0
        d_xf = (efd - xf) / e.Tf
        return (d_delta, d_omega, d_eqp, d_edp, d_eqpp, d_edpp, d_vr, d_efd, d_xf)

    def rk4(self, x, h, th, v_ref, t_m):
        k1 = self.derivs(x, th, v_ref, t_m)
        x2 = tuple(xi + 0.5 * h * ki for xi, ki in zip(x, k1))
        k2 = self.derivs(x2, th, v_ref, t_m)
        x3 = tuple(xi + 0.5 * h * ki for xi, ki in zip(x, k2))
        k3 = self.derivs(x3, th, v_ref, t_m)
        x4 = tuple(xi + h * ki for xi, ki in zip(x, k3))
        k4 = self.derivs(x4, th, v_ref, t_m)
        out = tuple(
            xi + h / 6.0 * (a + 2.0 * b + 2.0 * c + d)
            for xi, a, b, c, d in zip(x, k1, k2, k3, k4)
        )
        efd_i = 7
        lo, hi = self.e.Vf_min, self.e.Vf_max
        if not lo <= out[efd_i] <= hi:
            out = out[:efd_i] + (min(max(out[efd_i], lo), hi),) + out[efd_i + 1:]
        return out

    def signals(self, t, x, th):
        i_d, i_q, v_d, v_q = self.currents(x, th)
        v_t = math.hypot(v_d, v_q)
        p = v_d * i_d + v_q * i_q
        q = v_q * i_d - v_d * i_q
        xs = self.m.X_s
        # EMF behind X_s relative to the terminal phasor: E V* = V^2 + X_s Q + j X_s P
        re = v_t * v_t + xs * q
        im = xs * p
        delta = math.atan2(im, re)
        e_f = math.hypot(v_d - xs * i_q, v_q + xs * i_d)
        return SimSignals(t, v_t, v_d, v_q, x[1], delta, p, q, x[7], e_f)


def _check_finite(x, t):
    for v in x:
        if not (abs(v) <= DIVERGENCE_LIMIT):
            raise NumericDivergence("state magnitude exceeded divergence limit", t)


# ---------------------------------------------------------------------------
# public operations


def _terminal_injection(theta, v_t, network, machine, circuits):
    """Generator current phasor for terminal voltage v_t at angle theta."""
    v = v_t * complex(math.cos(theta), math.sin(theta))
    i = network.load_admittance(machine) * v
    if circuits > 0:
        y_lines = sum(1.0 / complex(z) for z in network.line_impedances[:circuits])
        z_net = complex(network.transformer_impedance) + 1.0 / y_lines
        i += (v - network.V_infinite_bus) / z_net
    return v, i


def init_steady_state(machine=None, exciter=None, network=None, P_target=0.8, V_T_target=1.0,
                      max_iter=200, tol=1e-14):
    """Back-solve an equilibrium delivering P_target at terminal voltage V_T_target.

    Newton iteration on the terminal-voltage angle against the infinite bus,
    then the machine and exciter states follow in closed form.
    """
    machine = machine or MachineParams()
    exciter = exciter or ExciterParams()
    network = network or NetworkParams()
    if not 0.8 <= V_T_target <= 1.2:
        raise ValueError("V_T_target must lie in [0.8, 1.2]")
    circuits = network.circuits_in_service

    def p_of(theta):
        v, i = _terminal_injection(theta, V_T_target, network, machine, circuits)
        return (v * i.conjugate()).real

    theta = 0.0
    if circuits == 0:
        raise NoEquilibrium("no network connection; terminal angle is undetermined")
    for _ in range(max_iter):
        err = p_of(theta) - P_target
        if abs(err) < tol:
            break
        step = 1e-7
        slope = (p_of(theta + step) - p_of(theta - step)) / (2 * step)
        if slope <= 0:
            raise NoEquilibrium(f"P_target={P_target} beyond the transfer limit")
        theta -= err / slope
        if abs(theta) > math.pi / 2:
            raise NoEquilibrium(f"P_target={P_target} beyond the transfer limit")
    else:
        raise NoEquilibrium(f"load flow did not converge in {max_iter} iterations")

    v, i = _terminal_injection(theta, V_T_target, network, machine, circuits)
    m = machine
    xdpp = m.X_d_pp if m.order == 6 else m.X_d_p
    xqpp = m.X_q_pp if m.order == 6 else m.X_q_p
    e_q_axis = v + complex(m.R_stator, m.X_q) * i
    delta_r = math.atan2(e_q_axis.imag, e_q_axis.real)
    rot = complex(math.cos(math.pi / 2 - delta_r), math.sin(math.pi / 2 - delta_r))
    vdq, idq = v * rot, i * rot
    v_d, v_q, i_d, i_q = vdq.real, vdq.imag, idq.real, idq.imag
    edp = (m.X_q - m.X_q_p) * i_q
    eqp_from_stator = v_q + m.R_stator * i_q + m.X_d_p * i_d
    if m.order == 6:
        eqpp = v_q + m.R_stator * i_q + xdpp * i_d
        edpp = v_d + m.R_stator * i_d - xqpp * i_q
        eqp = eqpp + (m.X_d_p - m.X_d_pp) * i_d
    else:
        eqp = eqp_from_stator
        eqpp, edpp = eqp, edp
    efd = eqp + (m.X_d - m.X_d_p) * i_d
    if m.order == 6:
        t_e = edpp * i_d + eqpp * i_q + (xqpp - xdpp) * i_d * i_q
    else:
        t_e = edp * i_d + eqp * i_q + (xqpp - xdpp) * i_d * i_q
    vr = exciter.Ke * efd
    v_ref = V_T_target + vr / exciter.Ka
    x = (delta_r, 1.0, eqp, edp, eqpp, edpp, vr, efd, efd)
    state = SimState(0.0, x, v_ref, t_e, circuits, False)

    model = _Model(machine, exciter, network)
    d = model.derivs(x, model.thevenin(circuits, False), v_ref, t_e)
    if max(abs(v) for v in d) > 1e-8:
        raise NoEquilibrium(f"back-solved state is not stationary (max derivative {max(map(abs, d)):.3e})")
    return state


def state_signals(state, machine=None, exciter=None, network=None):
    model = _Model(machine or MachineParams(), exciter or ExciterParams(), network or NetworkParams())
    return model.signals(state.t, state.x, model.thevenin(state.circuits, state.fault))


def state_derivatives(state, machine=None, exciter=None, network=None):
    model = _Model(machine or MachineParams(), exciter or ExciterParams(), network or NetworkParams())
    return model.derivs(state.x, model.thevenin(state.circuits, state.fault), state.V_ref, state.T_m)


def step(state, machine=None, exciter=None, network=None, h=2e-4):
    """Advance ``state`` by one RK4 step of length ``h``."""
    exciter = exciter or ExciterParams()
    if h <= 0 or h > exciter.Ta / 5 * (1 + 1e-9):
        raise ValueError(f"step h={h} must satisfy 0 < h <= Ta/5")
    model = _Model(machine or MachineParams(), exciter, network or NetworkParams())
    th = model.thevenin(state.circuits, state.fault)
    x = model.rk4(state.x, h, th, state.V_ref, state.T_m)
    _check_finite(x, state.t + h)
    return replace(state, t=state.t + h, x=x)


def _schedule(events, h, circuits0):
    """Turn events into {step_index: [actions]}; validates ordering and topology."""
    evs = sorted(events, key=lambda ev: ev.t_start)
    for a, b in zip(evs, evs[1:]):
        if a.t_start + a.duration > b.t_start + 1e-12:
            raise InvalidEvents(f"events overlap: {a.kind}@{a.t_start} and {b.kind}@{b.t_start}")
    actions = {}

    def add(t, act):
        actions.setdefault(int(round(t / h)), []).append(act)

    circuits = circuits0
    for ev in evs:
        if ev.kind == "VREF_STEP":
            add(ev.t_start, ("vref", 1.0 + ev.magnitude))
        elif ev.kind == "TERMINAL_FAULT_SELF_CLEARING":
            add(ev.t_start, ("fault", True))
            add(ev.t_start + ev.duration, ("fault", False))
        elif ev.kind == "TERMINAL_FAULT_CLEARED_BY_TRIP":
            if circuits < 1:
                raise InvalidEvents("no circuit left to trip")
            add(ev.t_start, ("fault", True))
            add(ev.t_start + ev.duration, ("fault", False))
            add(ev.t_start + ev.duration, ("circuits", -1))
            circuits -= 1
        elif ev.kind == "LINE_TRIP":
            if circuits < 1:
                raise InvalidEvents("no circuit left to trip")
            add(ev.t_start, ("circuits", -1))
            circuits -= 1
        elif ev.kind == "LINE_RECLOSE":
            if circuits >= 2:
                raise InvalidEvents("LINE_RECLOSE needs an open circuit; start with circuits_in_service=1")
            add(ev.t_start, ("circuits", +1))
            circuits += 1
    return actions


def run_scenario(machine=None, exciter=None, network=None, events=(), t_end=10.0, dt_sample=0.005,
                 h=2e-4, P_target=0.8, V_T_target=1.0, scenario_id="steady", initial_state=None,
                 unstable_window=1.0):
    """Simulate from equilibrium through ``events`` and sample every ``dt_sample``.

    The internal step is the largest step <= h that divides dt_sample.  Samples
    are taken at t = k * dt_sample for k = 0 .. round(t_end / dt_sample) - 1;
    each sample reflects the network condition in force from that instant.
    """
    machine = machine or MachineParams()
    exciter = exciter or ExciterParams()
    network = network or NetworkParams()
    n_sub = max(1, math.ceil(dt_sample / h - 1e-9))
    h_int = dt_sample / n_sub
    if h_int > exciter.Ta / 5 * (1 + 1e-9):
        raise ValueError("internal step exceeds Ta/5")
    n_samples = int(round(t_end / dt_sample))
    state = initial_state or init_steady_state(machine, exciter, network, P_target, V_T_target)
    actions = _schedule(events, h_int, state.circuits)

    model = _Model(machine, exciter, network)
    x, v_ref, t_m = state.x, state.V_ref, state.T_m
    v_ref0 = v_ref
    circuits, fault = state.circuits, state.fault
    th = model.thevenin(circuits, fault)
    signals = []
    vref_schedule = [(0.0, v_ref)]
    above_pi_run, prev_delta = 0.0, x[0]
    total = n_samples * n_sub
    for k in range(total):
        t = k * h_int
        acts = actions.get(k)
        if acts:
            for kind, val in acts:
                if kind == "vref":
                    v_ref = v_ref0 * val
                    vref_schedule.append((t, v_ref))
                elif kind == "fault":
                    fault = val
                else:
                    circuits += val
            th = model.thevenin(circuits, fault)
        if k % n_sub == 0:
            signals.append(model.signals(t, x, th))
            d_r = x[0]
            if d_r > math.pi and d_r > prev_delta:
                above_pi_run += dt_sample
                if above_pi_run >= unstable_window:
                    raise UnstableScenario(f"{scenario_id}: loss of synchronism near t={t:.3f} s")
            else:
                above_pi_run = 0.0
            prev_delta = d_r
        x = model.rk4(x, h_int, th, v_ref, t_m)
        _check_finite(x, (k + 1) * h_int)
    return SimTrace(signals, scenario_id, dt_sample, tuple(vref_schedule))


# ---------------------------------------------------------------------------
# trace CSV


def _fmt(v):
    return format(v, ".17g")


def write_trace_csv(trace, path, config_hash=None):
    path = Path(path)
    with path.open("w", newline="") as fh:
        if config_hash is not None:
            fh.write(f"# config={config_hash}\n")
        sched = ";".join(f"{_fmt(t)}:{_fmt(v)}" for t, v in trace.vref_schedule)
        fh.write(f"# vref_schedule={sched}\n")
        fh.write(f"# dt_sample={_fmt(trace.dt_sample)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for s in trace.signals:
            w.writerow([_fmt(getattr(s, f)) for f in SIGNAL_FIELDS] + [trace.scenario_id])


def read_trace_csv(path):
    path = Path(path)
    meta = {}
    rows = []
    with path.open() as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            meta[key] = val
        else:
            body.append(line)
    reader = csv.reader(body)
    header = next(reader)
    if tuple(header) != CSV_HEADER:
        raise ValueError(f"{path}: unexpected trace header {header}")
    scenario_id = None
    for rec in reader:
        if not rec:
            continue
        rows.append(SimSignals(*(float(v) for v in rec[:10])))
        scenario_id = rec[10]
    sched = tuple(
        tuple(float(p) for p in item.split(":"))
        for item in meta.get("vref_schedule", "").split(";") if item
    ) or ((0.0, float("nan")),)
    dt = float(meta["dt_sample"]) if "dt_sample" in meta else (rows[1].t - rows[0].t if len(rows) > 1 else 0.005)
    return SimTrace(rows, scenario_id or path.stem, dt, sched)
