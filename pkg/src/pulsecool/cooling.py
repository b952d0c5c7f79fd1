"""Cooling sequences and cycles: composition, application, energy traces.

A cooling sequence is an ordered list of pulses (the canonical pattern
alternates carrier σ_x pulses with σ_y demi-pulses); a cooling cycle is a
list of sequences with a dissipative reinitialization of the internal
state between sequences and after the last one.  Reinitialization is
instantaneous and recoil-free: rho -> Tr_spin(rho) ⊗ |g><g|.
"""

from __future__ import annotations

import importlib.resources
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import core
from .core import JointState, SystemParams, mean_phonons
from .errors import TruncationError
from .pulses import PropagatorFactory, PulseSpec

STEADY_STATE_TOL = 1e-3
CYCLE_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class CoolingSequence:
    pulses: tuple[PulseSpec, ...]

    def __post_init__(self):
        if not self.pulses:
            raise ValueError("a cooling sequence needs at least one pulse")
        object.__setattr__(self, "pulses", tuple(self.pulses))


@dataclass(frozen=True)
class CoolingCycle:
    sequences: tuple[CoolingSequence, ...]
    label: str = ""

    def __post_init__(self):
        if not self.sequences:
            raise ValueError("a cooling cycle needs at least one sequence")
        object.__setattr__(self, "sequences", tuple(self.sequences))

    def all_pulses(self):
        for seq in self.sequences:
            yield from seq.pulses


@dataclass
class EnergyTrace:
    """Mean phonon numbers recorded along a run, with leak diagnostics.

    ``energies[0]`` is the initial energy; subsequent entries follow the
    recording granularity of the producing call (per sequence for
    run_cycle, per cycle for run_repeated).  ``leaked_population`` is the
    total population lost past the Fock cutoff and restored by
    renormalization; runs abort before it can exceed the leak threshold.
    """

    energies: list[float] = field(default_factory=list)
    guard_populations: list[float] = field(default_factory=list)
    max_propagator_leak: float = 0.0
    leaked_population: float = 0.0
    steady_state_at: int | None = None

    def record(self, state: JointState, leak: float = 0.0) -> None:
        energy = mean_phonons(state)
        if energy < 0:
            raise ValueError("negative energy recorded")
        self.energies.append(energy)
        self.guard_populations.append(state.guard_population())
        self.max_propagator_leak = max(self.max_propagator_leak, leak)

    def detect_steady_state(self, window: int = 3,
                            tol: float = STEADY_STATE_TOL) -> int | None:
        e = self.energies
        for k in range(window, len(e)):
            if max(abs(e[k] - e[k - j]) for j in range(1, window + 1)) < tol:
                self.steady_state_at = k
                return k
        return None


def cycle_duration(cycle: CoolingCycle) -> float:
    """Total wall-clock time of a cycle: carrier |duration|, demi-pulse
    |t_p| + |t_p_open| + t_f, reinitializations free."""
    total = 0.0
    for pulse in cycle.all_pulses():
        if pulse.kind == "demi_pulse":
            t_open = pulse.t_p if pulse.t_p_open is None else pulse.t_p_open
            total += abs(pulse.t_p) + abs(t_open) + pulse.t_f
        else:
            total += abs(pulse.duration)
    return total


def pulse_count(cycle: CoolingCycle) -> int:
    """Pulses per cycle, counting each demi-pulse as its two half-pulses."""
    count = 0
    for pulse in cycle.all_pulses():
        if pulse.kind == "demi_pulse":
            count += 2
        elif pulse.kind == "carrier_coupling":
            count += 1
    return count


def reinitialize_spin(state: JointState) -> JointState:
    """Optical-pumping reset: rho -> Tr_spin(rho) ⊗ |g><g|.

    The motional marginal (and hence the mean phonon number) is exactly
    preserved; the operation is idempotent.
    """
    n = state.n_fock
    rho_m = state.rho[:n, :n] + state.rho[n:, n:]
    rho = np.zeros_like(state.rho)
    rho[n:, n:] = rho_m
    return JointState(rho=rho, n_fock=n, guard_levels=state.guard_levels)


def _pulse_propagator(pulse: PulseSpec, params: SystemParams, impulsive: bool,
                      factory: PropagatorFactory) -> tuple[np.ndarray, float]:
    if pulse.kind == "carrier_coupling":
        u = factory.carrier_u(pulse.theta, pulse.duration, impulsive,
                              pulse.omega_scale)
        return u, 0.0
    if pulse.kind == "free_evolution":
        return factory.free_u(pulse.duration), 0.0
    # demi_pulse: impulsively the symmetric case uses the merged closed
    # form; mismatched half-pulses (noise) fall back to the explicit
    # product.  Full dynamics always uses the elevated exact product.
    if impulsive:
        if pulse.is_symmetric:
            return factory.demi_u(pulse.t_p, pulse.t_f, impulsive=True,
                                  omega_scale=pulse.omega_scale,
                                  elevate=False, analytic=True)
        return factory.demi_u(pulse.t_p, pulse.t_f, impulsive=True,
                              t_p_open=pulse.t_p_open,
                              omega_scale=pulse.omega_scale, elevate=False)
    return factory.demi_u(pulse.t_p, pulse.t_f, impulsive=False,
                          t_p_open=pulse.t_p_open,
                          omega_scale=pulse.omega_scale, elevate=True)


@dataclass
class LeakMonitor:
    """Accounts for population lost past the cutoff during a run.

    Elevated-cutoff demi-pulses restricted back to the nominal space are
    slightly sub-unitary: the trace deficit after each application is the
    population that physically escaped the truncated representation.  The
    monitor accumulates it, lets the engine renormalize (so the density
    matrix invariants stay exact), and aborts once the total exceeds the
    leak threshold instead of silently corrupting results.
    """

    threshold: float
    leaked: float = 0.0
    max_propagator_leak: float = 0.0

    def absorb(self, state: JointState, propagator_leak: float,
               pulse_index: int) -> JointState:
        self.max_propagator_leak = max(self.max_propagator_leak, propagator_leak)
        tr = state.trace()
        lost = 1.0 - tr
        if lost > 0.0:
            self.leaked += lost
        if self.leaked > self.threshold:
            raise TruncationError(
                f"cumulative population leak {self.leaked:.3e} exceeds threshold "
                f"{self.threshold:.0e} at pulse {pulse_index}",
                leak=self.leaked, pulse_index=pulse_index)
        if abs(lost) > 1e-15:
            state = JointState(rho=state.rho / tr, n_fock=state.n_fock,
                               guard_levels=state.guard_levels)
        return state


def run_sequence(state: JointState, seq: CoolingSequence, params: SystemParams,
                 impulsive: bool = False,
                 factory: PropagatorFactory | None = None,
                 monitor: LeakMonitor | None = None) -> JointState:
    """Apply the pulses of one sequence in order, monitoring leakage."""
    factory = factory or PropagatorFactory(params)
    monitor = monitor or LeakMonitor(threshold=params.leak_threshold)
    for i, pulse in enumerate(seq.pulses):
        u, leak = _pulse_propagator(pulse, params, impulsive, factory)
        try:
            state = core.apply_unitary(state, u, leak_threshold=params.leak_threshold)
        except TruncationError as err:
            err.pulse_index = i
            raise
        state = monitor.absorb(state, leak, i)
    return state


def run_cycle(state: JointState, cycle: CoolingCycle, params: SystemParams,
              impulsive: bool = False,
              factory: PropagatorFactory | None = None,
              trace: EnergyTrace | None = None,
              monitor: LeakMonitor | None = None) -> tuple[JointState, EnergyTrace]:
    """Apply a full cycle: sequences with spin reinitialization between and
    after, recording the energy after each sequence."""
    factory = factory or PropagatorFactory(params)
    monitor = monitor or LeakMonitor(threshold=params.leak_threshold)
    own_trace = trace is None
    if own_trace:
        trace = EnergyTrace()
        trace.record(state)
    for seq in cycle.sequences:
        state = run_sequence(state, seq, params, impulsive, factory, monitor)
        state = reinitialize_spin(state)
        if own_trace:
            trace.record(state)
    trace.max_propagator_leak = max(trace.max_propagator_leak,
                                    monitor.max_propagator_leak)
    trace.leaked_population = max(trace.leaked_population, monitor.leaked)
    return state, trace


def run_repeated(state: JointState, cycle: CoolingCycle, params: SystemParams,
                 n_reps: int, impulsive: bool = False,
                 factory: PropagatorFactory | None = None) -> tuple[JointState, EnergyTrace]:
    """Apply a cycle ``n_reps`` times, recording the per-cycle energies and
    flagging the steady state (variation < 1e-3 over 3 cycles)."""
    if n_reps < 1:
        raise ValueError("n_reps must be >= 1")
    factory = factory or PropagatorFactory(params)
    monitor = LeakMonitor(threshold=params.leak_threshold)
    trace = EnergyTrace()
    trace.record(state)
    dummy = EnergyTrace()  # per-sequence recording suppressed inside reps
    for _ in range(n_reps):
        state, _ = run_cycle(state, cycle, params, impulsive, factory,
                             trace=dummy, monitor=monitor)
        trace.record(state)
    trace.max_propagator_leak = monitor.max_propagator_leak
    trace.leaked_population = monitor.leaked
    trace.detect_steady_state()
    return state, trace


def rescale_cycle(cycle: CoolingCycle, k: float) -> CoolingCycle:
    """Cycle rescaled for a k-fold stronger Rabi frequency.

    Carrier and free-flight durations shrink by 1/k (preserving the pulse
    kick ηΩ·t); demi-pulse t_p and t_f each shrink by 1/sqrt(k), which
    preserves the demi coupling ηΩν·t_p·t_f exactly while the total
    cooling time shrinks like 1/sqrt(k)."""
    if k <= 0:
        raise ValueError("k must be positive")
    root = math.sqrt(k)
    sequences = []
    for seq in cycle.sequences:
        pulses = []
        for p in seq.pulses:
            if p.kind == "demi_pulse":
                pulses.append(replace(
                    p, t_p=p.t_p / root, t_f=p.t_f / root,
                    t_p_open=None if p.t_p_open is None else p.t_p_open / root))
            else:
                pulses.append(replace(p, duration=p.duration / k))
        sequences.append(CoolingSequence(tuple(pulses)))
    return CoolingCycle(tuple(sequences), label=f"{cycle.label}-x{k:g}")


# ---------------------------------------------------------------------------
# Cycle files: versioned JSON with durations in units of 1/nu, so a cycle
# transfers between trap frequencies.
# ---------------------------------------------------------------------------

def _pulse_to_record(pulse: PulseSpec, nu: float) -> dict:
    if pulse.kind == "demi_pulse":
        rec = {"kind": pulse.kind, "t_p_nu": pulse.t_p * nu, "t_f_nu": pulse.t_f * nu}
        if pulse.t_p_open is not None:
            rec["t_p_open_nu"] = pulse.t_p_open * nu
    else:
        rec = {"kind": pulse.kind, "duration_nu": pulse.duration * nu}
        if pulse.kind == "carrier_coupling":
            rec["theta"] = pulse.theta
    if pulse.omega_scale != 1.0:
        rec["omega_scale"] = pulse.omega_scale
    return rec


def _pulse_from_record(rec: dict, nu: float) -> PulseSpec:
    kind = rec["kind"]
    scale = rec.get("omega_scale", 1.0)
    if kind == "demi_pulse":
        t_open = rec.get("t_p_open_nu")
        return PulseSpec(kind=kind, t_p=rec["t_p_nu"] / nu, t_f=rec["t_f_nu"] / nu,
                         t_p_open=None if t_open is None else t_open / nu,
                         omega_scale=scale)
    return PulseSpec(kind=kind, theta=rec.get("theta", 0.0),
                     duration=rec["duration_nu"] / nu, omega_scale=scale)


def cycle_to_dict(cycle: CoolingCycle, nu: float, metadata: dict | None = None) -> dict:
    return {
        "schema_version": CYCLE_SCHEMA_VERSION,
        "label": cycle.label,
        "time_unit": "1/nu",
        "sequences": [[_pulse_to_record(p, nu) for p in seq.pulses]
                      for seq in cycle.sequences],
        "metadata": metadata or {},
    }


def cycle_from_dict(data: dict, nu: float) -> CoolingCycle:
    if data.get("schema_version") != CYCLE_SCHEMA_VERSION:
        raise ValueError(f"unsupported cycle schema version {data.get('schema_version')}")
    sequences = tuple(
        CoolingSequence(tuple(_pulse_from_record(rec, nu) for rec in seq))
        for seq in data["sequences"])
    return CoolingCycle(sequences, label=data.get("label", ""))


def save_cycle(cycle: CoolingCycle, path, params: SystemParams,
               metadata: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(cycle_to_dict(cycle, params.nu, metadata), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_cycle(path, params: SystemParams) -> CoolingCycle:
    with open(path, encoding="utf-8") as fh:
        return cycle_from_dict(json.load(fh), params.nu)


def list_builtin_cycles() -> list[str]:
    root = importlib.resources.files("pulsecool") / "cycles"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def builtin_cycle(name: str, params: SystemParams) -> CoolingCycle:
    """Load one of the cycles shipped with the package."""
    root = importlib.resources.files("pulsecool") / "cycles"
    res = root / f"{name}.json"
    if not res.is_file():
        raise FileNotFoundError(
            f"no builtin cycle {name!r}; available: {', '.join(list_builtin_cycles())}")
    return cycle_from_dict(json.loads(res.read_text(encoding="utf-8")), params.nu)


def builtin_cycle_metadata(name: str) -> dict:
    root = importlib.resources.files("pulsecool") / "cycles"
    return json.loads((root / f"{name}.json").read_text(encoding="utf-8"))["metadata"]
