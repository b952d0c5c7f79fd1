"""Cycle optimization: simulated annealing alternating with quasi-Newton.

The search space is a flat vector of signed pulse durations in units of
1/ν (dimensionless, so proposal scales and gradients are O(1)).  Each
cooling sequence contributes ``pairs_per_sequence`` (carrier, demi-pulse)
pairs parameterized as (x_duration, t_p, t_f).  The objective simulates a
cycle from a thermal state in the impulsive limit on a reduced Fock space;
accepted cycles are re-validated at the full cutoff under both impulsive
and full dynamics, and the gap between the two is part of the acceptance
rule for shipping a cycle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.optimize

from . import cooling, core
from .cooling import CoolingCycle, CoolingSequence
from .core import SystemParams
from .errors import TruncationError
from .pulses import PulseSpec

# Smallest representable magnitude for signed durations, in 1/nu units;
# candidates inside the dead zone are clamped (a pulse this short is
# physically an identity at the problem's coupling strengths).
DURATION_FLOOR = 1e-9
T_F_FLOOR = 1e-4


@dataclass(frozen=True)
class CycleTemplate:
    """Structure of the cycles being optimized: sequences of alternating
    carrier pulses and demi-pulses."""

    n_sequences: int = 10
    pairs_per_sequence: int = 3
    theta: float = 0.0  # carrier spin-plane angle

    def __post_init__(self):
        if self.n_sequences < 1 or self.pairs_per_sequence < 1:
            raise ValueError("template needs at least one sequence and one pair")

    @property
    def n_params(self) -> int:
        return self.n_sequences * self.pairs_per_sequence * 3


def default_bounds(template: CycleTemplate,
                   x_max: float = 0.5, t_p_max: float = 0.05,
                   t_f_max: float = 0.5) -> np.ndarray:
    """Per-parameter (low, high) bounds in 1/nu units.

    Carrier durations and demi t_p are signed (orientation freedom, as in
    the negative pulse lengths of optimized sequences); t_f is a physical
    wait and stays positive.
    """
    per_pair = [(-x_max, x_max), (-t_p_max, t_p_max), (T_F_FLOOR, t_f_max)]
    n_pairs = template.n_sequences * template.pairs_per_sequence
    return np.array(per_pair * n_pairs, dtype=float)


@dataclass(frozen=True)
class OptimizationProblem:
    params: SystemParams
    template: CycleTemplate
    initial_nbar: float
    bounds: np.ndarray
    objective_mode: str = "single_cycle"  # or "k_cycles"
    k_cycles: int = 3
    seed: int = 0
    search_n_fock: int = 30
    search_leak_threshold: float = 5e-3

    def __post_init__(self):
        if self.initial_nbar < 0:
            raise ValueError("initial_nbar must be non-negative")
        if self.objective_mode not in ("single_cycle", "k_cycles"):
            raise ValueError(f"unknown objective_mode {self.objective_mode!r}")
        b = np.asarray(self.bounds, dtype=float)
        if b.shape != (self.template.n_params, 2):
            raise ValueError(f"bounds must have shape ({self.template.n_params}, 2)")
        if not np.all(np.isfinite(b)) or np.any(b[:, 1] <= b[:, 0]):
            raise ValueError("bounds must be finite with positive width")
        object.__setattr__(self, "bounds", b)

    def search_params(self) -> SystemParams:
        return replace(self.params, n_fock=self.search_n_fock,
                       guard_levels=core.default_guard_levels(self.search_n_fock),
                       leak_threshold=self.search_leak_threshold)

    @property
    def penalty(self) -> float:
        """Objective sentinel for candidates that leak past the cutoff."""
        return 10.0 * max(self.initial_nbar, 1.0)


def make_problem(params: SystemParams, initial_nbar: float,
                 template: CycleTemplate | None = None, seed: int = 0,
                 **kwargs) -> OptimizationProblem:
    template = template or CycleTemplate()
    bound_kw = {k: kwargs.pop(k) for k in ("x_max", "t_p_max", "t_f_max")
                if k in kwargs}
    bounds = kwargs.pop("bounds", None)
    if bounds is None:
        bounds = default_bounds(template, **bound_kw)
    return OptimizationProblem(params=params, template=template,
                               initial_nbar=initial_nbar, bounds=bounds,
                               seed=seed, **kwargs)


def cycle_from_candidate(problem: OptimizationProblem,
                         candidate: np.ndarray,
                         label: str = "candidate") -> CoolingCycle:
    """Assemble a CoolingCycle (durations in seconds) from a parameter
    vector in 1/nu units; magnitudes inside the dead zone are clamped."""
    t = problem.template
    nu = problem.params.nu
    x = np.asarray(candidate, dtype=float)
    if x.shape != (t.n_params,):
        raise ValueError(f"candidate must have {t.n_params} entries")

    def signed(v: float) -> float:
        return math.copysign(max(abs(v), DURATION_FLOOR), v if v != 0 else 1.0)

    sequences = []
    i = 0
    for _ in range(t.n_sequences):
        pulses = []
        for _ in range(t.pairs_per_sequence):
            xd, tp, tf = x[i], x[i + 1], x[i + 2]
            i += 3
            pulses.append(PulseSpec(kind="carrier_coupling", theta=t.theta,
                                    duration=signed(xd) / nu))
            pulses.append(PulseSpec(kind="demi_pulse", t_p=signed(tp) / nu,
                                    t_f=max(tf, T_F_FLOOR) / nu))
        sequences.append(CoolingSequence(tuple(pulses)))
    return CoolingCycle(tuple(sequences), label=label)


def _simulate(problem: OptimizationProblem, cycle: CoolingCycle,
              params: SystemParams, impulsive: bool, n_cycles: int) -> float:
    state = core.thermal_state(params, problem.initial_nbar)
    if n_cycles == 1:
        state, _ = cooling.run_cycle(state, cycle, params, impulsive=impulsive)
    else:
        state, _ = cooling.run_repeated(state, cycle, params, n_cycles,
                                        impulsive=impulsive)
    return core.mean_phonons(state)


def objective(problem: OptimizationProblem, candidate: np.ndarray) -> float:
    """Mean phonon number after the candidate cycle, impulsive limit,
    reduced cutoff.  Truncation failures return the penalty sentinel."""
    cycle = cycle_from_candidate(problem, candidate)
    n_cycles = problem.k_cycles if problem.objective_mode == "k_cycles" else 1
    try:
        return _simulate(problem, cycle, problem.search_params(),
                         impulsive=True, n_cycles=n_cycles)
    except TruncationError:
        return problem.penalty


def initial_candidate(problem: OptimizationProblem,
                      theta_split: float = math.pi / 2,
                      free_scale: float = 0.35) -> np.ndarray:
    """Trotterized-sideband starting point: each sequence approximates a
    red-sideband rotation split over its pulse pairs."""
    p = problem.params
    t = problem.template
    m = t.pairs_per_sequence
    ratio = p.coupling / p.nu  # ηΩ/ν
    x = theta_split / (4.0 * m * ratio)
    t_f = theta_split * free_scale / m
    t_p = -1.0 / (4.0 * free_scale * ratio)
    per_pair = [x, t_p, t_f]
    cand = np.array(per_pair * (t.n_sequences * m), dtype=float)
    return clip_to_bounds(cand, problem.bounds)


def clip_to_bounds(x: np.ndarray, bounds: np.ndarray) -> np.ndarray:
    return np.clip(x, bounds[:, 0], bounds[:, 1])


@dataclass(frozen=True)
class AnnealSchedule:
    """Annealing controls: geometric temperature decay from t0, proposals
    perturbing one random coordinate by a Gaussian of width
    proposal_scale · bound width, shrunk as sqrt(T/t0) (floored) so the
    walk refines as it freezes."""

    t0: float = 1.0
    cooling_rate: float = 0.999
    steps: int = 20000
    proposal_scale: float = 0.05   # fraction of each bound width
    proposal_floor: float = 0.02   # lower bound on the sqrt(T/t0) shrink


@dataclass
class OptimizationResult:
    best_params: np.ndarray
    best_objective: float
    history: np.ndarray
    termination_reason: str
    best_cycle: CoolingCycle | None = None
    objective_impulsive_validated: float | None = None
    objective_full_dynamics: float | None = None
    validation_gap: float | None = None
    meets_gap_rule: bool | None = None


def meets_validation_gap(impulsive: float, full: float,
                         rel: float = 0.25, absolute: float = 0.2) -> bool:
    """Shipped-cycle rule: full-dynamics objective within 25% or 0.2 ħν
    (whichever is larger) of the impulsive one."""
    return abs(full - impulsive) <= max(rel * impulsive, absolute)


def anneal_minimize(f, x0: np.ndarray, bounds: np.ndarray,
                    schedule: AnnealSchedule, rng: np.random.Generator):
    """Metropolis random walk with geometric temperature decay.

    Proposals perturb one random coordinate by a Gaussian whose width is
    ``proposal_scale`` of that coordinate's bound width, clipped to the
    bounds.  Returns (best_x, best_f, history of the current objective).
    """
    x = clip_to_bounds(np.asarray(x0, dtype=float).copy(), bounds)
    fx = f(x)
    best_x, best_f = x.copy(), fx
    widths = bounds[:, 1] - bounds[:, 0]
    temperature = schedule.t0
    history = np.empty(schedule.steps)
    for step in range(schedule.steps):
        shrink = max(math.sqrt(temperature / schedule.t0), schedule.proposal_floor)
        j = int(rng.integers(len(x)))
        proposal = x.copy()
        proposal[j] += rng.normal(0.0, schedule.proposal_scale * widths[j] * shrink)
        proposal[j] = min(max(proposal[j], bounds[j, 0]), bounds[j, 1])
        fp = f(proposal)
        delta = fp - fx
        if delta <= 0 or rng.random() < math.exp(-delta / max(temperature, 1e-300)):
            x, fx = proposal, fp
        if fx < best_f:
            best_x, best_f = x.copy(), fx
        history[step] = fx
        temperature *= schedule.cooling_rate
    return best_x, best_f, history


def anneal(problem: OptimizationProblem, schedule: AnnealSchedule,
           start: np.ndarray | None = None,
           seed: int | None = None) -> OptimizationResult:
    """Simulated annealing over the cycle parameters; reproducible per seed."""
    rng = np.random.default_rng(problem.seed if seed is None else seed)
    x0 = initial_candidate(problem) if start is None else np.asarray(start, float)
    if schedule.steps == 0:
        fx = objective(problem, x0)
        return OptimizationResult(best_params=x0.copy(), best_objective=fx,
                                  history=np.array([fx]),
                                  termination_reason="zero steps",
                                  best_cycle=cycle_from_candidate(problem, x0))
    best_x, best_f, history = anneal_minimize(
        lambda x: objective(problem, x), x0, problem.bounds, schedule, rng)
    return OptimizationResult(best_params=best_x, best_objective=best_f,
                              history=history,
                              termination_reason="schedule exhausted",
                              best_cycle=cycle_from_candidate(problem, best_x))


def fd_gradient(f, x: np.ndarray, rel_step: float = 1e-6,
                bounds: np.ndarray | None = None) -> np.ndarray:
    """Central-difference gradient with relative step ``rel_step``.

    The step for coordinate i is rel_step * max(|x_i|, scale_i), where
    scale_i is 1 without bounds and 1% of the bound width with them
    (signed durations pass through zero, where a purely relative step
    would vanish)."""
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    if bounds is not None:
        scales = 0.01 * (bounds[:, 1] - bounds[:, 0])
    else:
        scales = np.ones_like(x)
    for i in range(len(x)):
        h = rel_step * max(abs(x[i]), scales[i])
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        grad[i] = (f(xp) - f(xm)) / (2.0 * h)
    return grad


def bfgs_refine(problem: OptimizationProblem, start: np.ndarray,
                max_iter: int = 200, gtol: float = 1e-6) -> OptimizationResult:
    """Quasi-Newton refinement (bounded L-BFGS) from a given candidate,
    using central-difference gradients.  Never returns a candidate worse
    than the start; line-search failures return the best found with the
    solver's message as the termination reason."""
    start = clip_to_bounds(np.asarray(start, dtype=float), problem.bounds)
    best = {"x": start.copy(), "f": objective(problem, start)}
    history = [best["f"]]

    def fun(x):
        fx = objective(problem, x)
        history.append(fx)
        if fx < best["f"]:
            best["x"], best["f"] = x.copy(), fx
        return fx

    res = scipy.optimize.minimize(
        fun, start, jac=lambda x: fd_gradient(fun, x, bounds=problem.bounds),
        method="L-BFGS-B", bounds=problem.bounds,
        options={"maxiter": max_iter, "gtol": gtol, "ftol": 1e-14})
    return OptimizationResult(best_params=best["x"], best_objective=best["f"],
                              history=np.asarray(history),
                              termination_reason=str(res.message),
                              best_cycle=cycle_from_candidate(problem, best["x"]))


def validate_result(problem: OptimizationProblem,
                    result: OptimizationResult) -> OptimizationResult:
    """Re-evaluate the best cycle at the full cutoff under both impulsive
    and full dynamics and record the validation gap."""
    cycle = cycle_from_candidate(problem, result.best_params)
    n_cycles = problem.k_cycles if problem.objective_mode == "k_cycles" else 1
    imp = _simulate(problem, cycle, problem.params, impulsive=True,
                    n_cycles=n_cycles)
    full = _simulate(problem, cycle, problem.params, impulsive=False,
                     n_cycles=n_cycles)
    result.best_cycle = cycle
    result.objective_impulsive_validated = imp
    result.objective_full_dynamics = full
    result.validation_gap = abs(full - imp)
    result.meets_gap_rule = meets_validation_gap(imp, full)
    return result


def hybrid_optimize(problem: OptimizationProblem, rounds: int = 2,
                    schedule: AnnealSchedule | None = None,
                    bfgs_max_iter: int = 200,
                    start: np.ndarray | None = None) -> OptimizationResult:
    """Alternate annealing (escapes local minima) with quasi-Newton
    refinement (fast convergence), threading the best candidate, then
    validate the winner under both dynamics at the full cutoff."""
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    schedule = schedule or AnnealSchedule()
    seeds = np.random.SeedSequence(problem.seed).spawn(rounds)
    x = initial_candidate(problem) if start is None else np.asarray(start, float)
    best_x = clip_to_bounds(x, problem.bounds)
    best_f = objective(problem, best_x)
    history = [best_f]
    for r in range(rounds):
        res_a = anneal(problem, schedule, start=best_x,
                       seed=int(seeds[r].generate_state(1)[0]))
        history.extend(res_a.history)
        if res_a.best_objective < best_f:
            best_x, best_f = res_a.best_params, res_a.best_objective
        res_b = bfgs_refine(problem, best_x, max_iter=bfgs_max_iter)
        history.extend(res_b.history)
        if res_b.best_objective < best_f:
            best_x, best_f = res_b.best_params, res_b.best_objective
    result = OptimizationResult(best_params=best_x, best_objective=best_f,
                                history=np.asarray(history),
                                termination_reason="rounds exhausted")
    return validate_result(problem, result)
