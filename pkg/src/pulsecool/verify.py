"""Self-check suite: fast invariant verification across the modules.

Run via ``pulsecool verify`` or :func:`run_verification`.  Every check is
cheap (the whole suite takes a few seconds) and pins the core identities:
ladder algebra, the matrix-exponential cross-validation, propagator
unitarity, the merged demi-pulse against its three-exponent oracle, the
Trotter error scaling, the standing-wave emulation identity, and the
two- and three-ion chain closed forms.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import chain, cooling, core, pulses


@dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    measured: float
    threshold: float
    seconds: float


def _timed(name, threshold, value_fn, checks):
    t0 = time.perf_counter()
    measured = float(value_fn())
    checks.append(CheckResult(name=name, ok=measured < threshold,
                              measured=measured, threshold=threshold,
                              seconds=time.perf_counter() - t0))


def run_verification(params: core.SystemParams | None = None) -> list[CheckResult]:
    p = params or core.make_params(n_fock=40)
    fac = pulses.PropagatorFactory(p)
    n = p.n_fock
    checks: list[CheckResult] = []

    def fock_ladder():
        ops = core.build_fock_operators(n)
        err = 0.0
        for k in range(1, n):
            col = np.zeros(n)
            col[k] = 1.0
            target = np.zeros(n)
            target[k - 1] = math.sqrt(k)
            err = max(err, float(np.max(np.abs(ops.a @ col - target))))
        err = max(err, core.max_abs(ops.n_op - np.diag(np.arange(n).astype(complex))))
        return err
    _timed("fock_ladder_algebra", 1e-12, fock_ladder, checks)

    def commutator():
        ops = core.build_fock_operators(n)
        dev = ops.x_tilde @ ops.p_tilde - ops.p_tilde @ ops.x_tilde - 1j * np.eye(n)
        return core.max_abs(dev[: n - 1, : n - 1])
    _timed("commutator_localized_to_top_level", 1e-12, commutator, checks)

    def sideband_identity():
        ops = core.build_fock_operators(n)
        lhs = pulses.ideal_red_sideband(n)
        rhs = (core.tensor_spin_fock(core.SIGMA_X, ops.x_tilde)
               - core.tensor_spin_fock(core.SIGMA_Y, ops.p_tilde)) / math.sqrt(2)
        return core.max_abs(lhs - rhs)
    _timed("red_sideband_identity", 1e-12, sideband_identity, checks)

    def expm_oracle():
        rng = np.random.default_rng(7)
        m = rng.normal(size=(40, 40)) + 1j * rng.normal(size=(40, 40))
        h = (m + m.conj().T) / 2
        return core.max_abs(core.matrix_exp(h, 0.7) - core.matrix_exp_eigh(h, 0.7))
    _timed("matrix_exp_vs_eigendecomposition", 1e-8, expm_oracle, checks)

    def unitarity():
        worst = 0.0
        for u in (fac.carrier_u(0.0, 0.01 / p.nu, impulsive=True),
                  fac.carrier_u(1.1, -0.02 / p.nu, impulsive=False),
                  pulses.demi_pulse_analytic(p, 0.01 / p.coupling, 0.1 / p.nu,
                                             factory=fac).u,
                  pulses.trotter_red_sideband(p, math.pi / 2, 8, factory=fac).u):
            worst = max(worst, core.unitarity_defect(u))
        return worst
    _timed("propagator_unitarity", 1e-9, unitarity, checks)

    def thermal_sanity():
        nbar = 3.0 if n >= 40 else 1.0  # keep the tail inside small cutoffs
        state = core.thermal_state(p, nbar)
        err = abs(core.mean_phonons(state) - nbar)
        return max(err, abs(state.phonon_distribution()[0] - 1.0 / (1.0 + nbar)))
    _timed("thermal_state_moments", 1e-3, thermal_sanity, checks)

    def demi_oracle():
        worst = 0.0
        for ct, ft in ((0.3, 0.2), (1.0, 0.6)):
            a = pulses.demi_pulse_analytic(p, ct / p.coupling, ft / p.nu,
                                           elevate=True, factory=fac)
            e = pulses.demi_pulse_exact(p, ct / p.coupling, ft / p.nu,
                                        impulsive=True, elevate=True, factory=fac)
            dist, _ = core.phase_aligned_distance(a.u, e.u)
            worst = max(worst, dist)
        return worst
    _timed("demi_pulse_merged_vs_product", 1e-8, demi_oracle, checks)

    def scalar_phase():
        t_p, t_f = 0.8 / p.coupling, 0.5 / p.nu
        bare = pulses.demi_pulse_analytic(p, t_p, t_f, elevate=True,
                                          include_scalar_phase=False, factory=fac)
        exact = pulses.demi_pulse_exact(p, t_p, t_f, impulsive=True,
                                        elevate=True, factory=fac)
        _, phi = core.phase_aligned_distance(bare.u, exact.u)
        want = pulses.demi_scalar_phase(p, t_p, t_f)
        return abs((phi + want + math.pi) % (2 * math.pi) - math.pi)
    _timed("demi_pulse_scalar_phase", 1e-6, scalar_phase, checks)

    def trotter_ratio():
        small = core.make_params(n_fock=16)
        f = pulses.PropagatorFactory(small)
        u8 = pulses.trotter_red_sideband(small, math.pi, 8, factory=f).u
        u16 = pulses.trotter_red_sideband(small, math.pi, 16, factory=f).u
        u_many = pulses.trotter_red_sideband(small, math.pi, 2048, factory=f).u
        e8, _ = core.phase_aligned_distance(u_many, u8)
        e16, _ = core.phase_aligned_distance(u_many, u16)
        return abs(e16 / e8 - 0.5)
    _timed("trotter_first_order_ratio", 0.1, trotter_ratio, checks)

    _timed("standing_wave_emulation", 1e-9,
           lambda: pulses.standing_wave_emulation_check(p, 0.05 / p.nu), checks)

    def chain_exact():
        m2 = chain.build_chain(2)
        err = core.max_abs(m2.mode_frequencies - np.array([1.0, math.sqrt(3.0)]))
        u3 = chain.equilibrium_positions(3)
        err = max(err, float(np.max(np.abs(
            u3 - np.array([-1, 0, 1]) * (5.0 / 4.0) ** (1 / 3)))))
        return err
    _timed("chain_two_and_three_ion_closed_forms", 1e-8, chain_exact, checks)

    def reinit():
        state = core.thermal_state(p, 2.0)
        rotated = core.apply_unitary(state, fac.carrier_u(0.3, 0.01 / p.nu, True))
        reset = cooling.reinitialize_spin(rotated)
        err = abs(core.mean_phonons(reset) - core.mean_phonons(rotated))
        err = max(err, core.max_abs(cooling.reinitialize_spin(reset).rho - reset.rho))
        return err
    _timed("reinitialization_preserves_motion", 1e-12, reinit, checks)

    return checks


def all_passed(checks: list[CheckResult]) -> bool:
    return all(c.ok for c in checks)


def format_report(checks: list[CheckResult]) -> str:
    lines = []
    for c in checks:
        status = "PASS" if c.ok else "FAIL"
        lines.append(f"{status}  {c.name:42s} measured {c.measured:.3e} "
                     f"(< {c.threshold:.0e})  [{c.seconds:.2f}s]")
    return "\n".join(lines)
