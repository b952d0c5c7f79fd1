"""Monte Carlo robustness of cooling cycles to timing and power noise.

Every targeted quantity q is perturbed multiplicatively, q -> (1+ε)q with
ε ~ N(0, sigma²).  Two correlation granularities model the two noise
timescales:

* ``per_cycle`` (slow drift): one ε per realization, shared by every pulse
  of every repetition.  The demi-pulse half-pulses stay matched, so the
  effective momentum coupling only shifts smoothly.
* ``per_pulse`` (fast noise, timescale below the pulse spacing): an
  independent ε for every primitive segment, including each σ_y
  half-pulse of a demi-pulse separately.  Mismatched half-pulses leave a
  first-order residual position coupling, which is exactly the mechanism
  that makes fast noise the more damaging of the two.

Randomness discipline: each (sigma, sample) pair gets its own generator
derived from a spawned ``numpy.random.SeedSequence``, so results are
reproducible bit-for-bit regardless of evaluation order or parallelism.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from joblib import Parallel, delayed

from . import cooling, core
from .cooling import CoolingCycle, CoolingSequence
from .core import SystemParams
from .errors import PulsecoolError
from .pulses import PropagatorFactory, PulseSpec

DEFAULT_SIGMAS = (0.0, 0.005, 0.01, 0.02, 0.05, 0.1)
MAX_RESAMPLES = 100

TARGETS = ("timings", "rabi_power", "both")
CORRELATIONS = ("per_pulse", "per_cycle")


@dataclass(frozen=True)
class NoiseSpec:
    target: str = "timings"
    sigma: float = 0.01
    correlation: str = "per_cycle"
    n_samples: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.target not in TARGETS:
            raise ValueError(f"target must be one of {TARGETS}")
        if self.correlation not in CORRELATIONS:
            raise ValueError(f"correlation must be one of {CORRELATIONS}")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")


def _draw(rng: np.random.Generator, sigma: float) -> float:
    """One multiplicative factor (1+ε), resampled away from sign flips."""
    if sigma == 0.0:
        return 1.0
    for _ in range(MAX_RESAMPLES):
        factor = 1.0 + rng.normal(0.0, sigma)
        if factor > 0.0:
            return factor
    raise PulsecoolError(
        f"could not draw a sign-preserving noise factor at sigma={sigma}")


def _perturb_pulse(pulse: PulseSpec, noise: NoiseSpec,
                   rng: np.random.Generator, shared: dict | None) -> PulseSpec:
    """Perturb one pulse; ``shared`` holds the per-cycle factors if the
    noise is slow, otherwise every segment draws its own."""
    def factor(key: str) -> float:
        if shared is not None:
            return shared[key]
        return _draw(rng, noise.sigma)

    changes = {}
    if noise.target in ("timings", "both"):
        if pulse.kind == "demi_pulse":
            t_open = pulse.t_p if pulse.t_p_open is None else pulse.t_p_open
            changes["t_p"] = pulse.t_p * factor("t")
            changes["t_p_open"] = t_open * factor("t")
            changes["t_f"] = pulse.t_f * factor("t")
        else:
            changes["duration"] = pulse.duration * factor("t")
    if noise.target in ("rabi_power", "both"):
        changes["omega_scale"] = pulse.omega_scale * factor("omega")
    return replace(pulse, **changes) if changes else pulse


def perturb_cycle(cycle: CoolingCycle, noise: NoiseSpec,
                  rng: np.random.Generator) -> CoolingCycle:
    """One noisy realization of a cycle.

    per_cycle correlation: all pulses share a single ε per targeted
    quantity.  per_pulse: every primitive segment (carrier pulse, each
    demi half-pulse, each free flight) draws independently.
    """
    if noise.sigma == 0.0:
        return cycle
    shared = None
    if noise.correlation == "per_cycle":
        shared = {"t": _draw(rng, noise.sigma), "omega": _draw(rng, noise.sigma)}
    sequences = []
    for seq in cycle.sequences:
        sequences.append(CoolingSequence(tuple(
            _perturb_pulse(p, noise, rng, shared) for p in seq.pulses)))
    return CoolingCycle(tuple(sequences), label=cycle.label)


@dataclass(frozen=True)
class RobustnessPoint:
    sigma: float
    target: str
    correlation: str
    mean_final: float
    std_final: float
    n_ok: int
    n_failed: int


def _one_sample(cycle: CoolingCycle, params: SystemParams, initial_nbar: float,
                n_reps: int, noise: NoiseSpec, seed_state,
                impulsive: bool) -> float | None:
    rng = np.random.default_rng(seed_state)
    try:
        if noise.correlation == "per_cycle" or noise.sigma == 0.0:
            noisy = perturb_cycle(cycle, noise, rng)
            state = core.thermal_state(params, initial_nbar)
            state, _ = cooling.run_repeated(state, noisy, params, n_reps,
                                            impulsive=impulsive)
        else:
            # fast noise: fresh draws for every cycle application
            state = core.thermal_state(params, initial_nbar)
            factory = PropagatorFactory(params)
            monitor = cooling.LeakMonitor(threshold=params.leak_threshold)
            dummy = cooling.EnergyTrace()
            for _ in range(n_reps):
                noisy = perturb_cycle(cycle, noise, rng)
                state, _ = cooling.run_cycle(state, noisy, params,
                                             impulsive=impulsive,
                                             factory=factory, trace=dummy,
                                             monitor=monitor)
        return core.mean_phonons(state)
    except PulsecoolError:
        return None


def monte_carlo_robustness(cycle: CoolingCycle, params: SystemParams,
                           initial_nbar: float, n_reps: int, noise: NoiseSpec,
                           sigmas=None, impulsive: bool = True,
                           n_jobs: int = 1) -> list[RobustnessPoint]:
    """Robustness curve: mean/std of the final phonon number over
    ``noise.n_samples`` noisy realizations of a repeated cooling run, for
    each sigma of the sweep.

    Failed samples (truncation aborts) are counted, never silently
    dropped.  With ``n_jobs`` > 1 the samples are evaluated in parallel;
    the per-sample seed streams make the result independent of scheduling.
    """
    sigmas = DEFAULT_SIGMAS if sigmas is None else tuple(sigmas)
    root = np.random.SeedSequence(noise.seed)
    per_sigma = root.spawn(len(sigmas))
    points = []
    for sigma, sigma_seed in zip(sigmas, per_sigma):
        spec = replace(noise, sigma=float(sigma))
        children = sigma_seed.spawn(noise.n_samples)
        if n_jobs == 1:
            finals = [_one_sample(cycle, params, initial_nbar, n_reps, spec,
                                  child, impulsive) for child in children]
        else:
            finals = Parallel(n_jobs=n_jobs)(
                delayed(_one_sample)(cycle, params, initial_nbar, n_reps, spec,
                                     child, impulsive) for child in children)
        ok = np.array([f for f in finals if f is not None], dtype=float)
        n_failed = len(finals) - len(ok)
        points.append(RobustnessPoint(
            sigma=float(sigma), target=spec.target, correlation=spec.correlation,
            mean_final=float(ok.mean()) if len(ok) else math.nan,
            std_final=float(ok.std(ddof=1)) if len(ok) > 1 else 0.0,
            n_ok=int(len(ok)), n_failed=int(n_failed)))
    return points
