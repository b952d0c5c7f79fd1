"""Linear ion chains: equilibria, axial normal modes, local-basis cooling.

Everything is computed in Coulomb-crystal units: positions in the length
scale ℓ = (q²/(4πϵ₀ m ν²))^(1/3), frequencies in units of the trap (or
pinning) frequency ν.  Two confinement kinds are supported:

* ``regular_trap``: one global harmonic well, dimensionless potential
  V = Σ u_i²/2 + Σ_{i<j} 1/|u_i - u_j|.
* ``pinned_equidistant``: each ion in its own harmonic well of frequency
  ν.  The wells are centered so the prescribed uniform lattice is the
  exact equilibrium (they absorb the static Coulomb force); only the
  curvature enters the modes.

Cooling every ion to the ground state of its local well produces a
product Gaussian state; its covariance expressed in the normal-mode basis
gives the residual occupation of each collective mode, in particular the
center-of-mass mode.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.constants

from .errors import ConvergenceError, PulsecoolError

KINDS = ("regular_trap", "pinned_equidistant")
FORCE_TOL = 1e-10
CA40_MASS_AMU = 39.9625909

# Default lattice constant of the pinned chain, in units of ℓ.  One
# Coulomb length keeps the interaction-to-pinning curvature ratio fixed as
# the chain grows, so boundary effects are the only N-dependence and the
# COM occupation saturates; tying the spacing to the same-N regular
# crystal instead would shrink it indefinitely and prevent saturation.
UNIT_PINNED_SPACING = 1.0


def coulomb_length_scale(nu: float, mass_amu: float = CA40_MASS_AMU,
                         charge: int = 1) -> float:
    """ℓ = (q²/(4πϵ₀ m ν²))^(1/3) in meters."""
    q = charge * scipy.constants.elementary_charge
    m = mass_amu * scipy.constants.atomic_mass
    return (q ** 2 / (4 * math.pi * scipy.constants.epsilon_0 * m * nu ** 2)) ** (1.0 / 3.0)


def _coulomb_gradient(u: np.ndarray) -> np.ndarray:
    diff = u[:, None] - u[None, :]
    np.fill_diagonal(diff, np.inf)
    return -np.sum(np.sign(diff) / diff ** 2, axis=1)


def _coulomb_hessian(u: np.ndarray) -> np.ndarray:
    diff = u[:, None] - u[None, :]
    np.fill_diagonal(diff, np.inf)
    off = -2.0 / np.abs(diff) ** 3
    h = off.copy()
    np.fill_diagonal(h, -off.sum(axis=1))
    return h


def equilibrium_positions(n_ions: int, kind: str = "regular_trap",
                          spacing: float | None = None) -> np.ndarray:
    """Equilibrium positions in units of ℓ, sorted ascending.

    regular_trap: damped Newton iteration on the force balance from a
    uniformly spaced seed, to residual < 1e-10.  pinned_equidistant: the
    prescribed uniform lattice (wells compensate the static Coulomb force,
    so it is the equilibrium by construction); default lattice constant
    ``UNIT_PINNED_SPACING`` = 1 ℓ.
    """
    if n_ions < 1:
        raise ValueError("n_ions must be >= 1")
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    if n_ions == 1:
        return np.zeros(1)
    if kind == "pinned_equidistant":
        d = UNIT_PINNED_SPACING if spacing is None else float(spacing)
        if d <= 0:
            raise ValueError("spacing must be positive")
        return d * (np.arange(n_ions) - (n_ions - 1) / 2.0)

    # uniform seed with the crystal's approximate extent
    guess_d = 2.0 * (0.25 + 0.75 / n_ions) ** (1 / 3) * n_ions ** (-0.37)
    u = guess_d * (np.arange(n_ions, dtype=float) - (n_ions - 1) / 2.0) * n_ions ** 0.4
    grad = u + _coulomb_gradient(u)
    for _ in range(200):
        norm = float(np.max(np.abs(grad)))
        if norm < FORCE_TOL:
            return u
        hess = np.eye(n_ions) + _coulomb_hessian(u)
        step = np.linalg.solve(hess, -grad)
        alpha = 1.0
        for _ in range(60):  # backtracking; ions must not cross
            trial = u + alpha * step
            if np.all(np.diff(trial) > 0):
                trial_grad = trial + _coulomb_gradient(trial)
                if np.max(np.abs(trial_grad)) < norm or alpha < 1e-6:
                    u, grad = trial, trial_grad
                    break
            alpha *= 0.5
        else:
            break
    norm = float(np.max(np.abs(grad)))
    if norm >= FORCE_TOL:
        raise ConvergenceError(
            f"equilibrium Newton iteration stalled at residual {norm:.3e} "
            f"for N={n_ions}", residual=norm)
    return u


def force_residual(positions: np.ndarray, kind: str) -> float:
    """Max-norm of the net dimensionless force at the given positions."""
    if kind == "pinned_equidistant":
        return 0.0  # wells are centered to cancel the Coulomb force
    return float(np.max(np.abs(positions + _coulomb_gradient(positions))))


def mean_spacing(n_ions: int) -> float:
    """Mean nearest-neighbor spacing of the regular N-ion crystal [ℓ]."""
    if n_ions < 2:
        raise ValueError("mean spacing needs at least two ions")
    u = equilibrium_positions(n_ions, "regular_trap")
    return float((u[-1] - u[0]) / (n_ions - 1))


@dataclass(frozen=True)
class ChainModel:
    """An N-ion chain with its equilibrium and axial normal modes.

    ``mode_vectors[:, k]`` is the (orthonormal) eigenvector of mode k;
    ``mode_frequencies`` are in units of ν, sorted ascending.
    ``local_frequencies[i]`` is sqrt of the diagonal Hessian element at
    ion i (the well the ion sees with its neighbors frozen), the
    frequency targeted when cooling in the local basis.
    """

    n_ions: int
    kind: str
    nu: float
    length_scale: float
    positions: np.ndarray
    mode_frequencies: np.ndarray
    mode_vectors: np.ndarray
    local_frequencies: np.ndarray
    com_index: int
    spacing: float | None = None


def _full_hessian(positions: np.ndarray) -> np.ndarray:
    return np.eye(len(positions)) + _coulomb_hessian(positions)


def normal_modes(positions: np.ndarray) -> tuple[np.ndarray, np.ndarray, int]:
    """Frequencies [ν], orthonormal mode vectors, and the COM mode index
    (maximal overlap with the uniform vector)."""
    hess = _full_hessian(positions)
    evals, evecs = np.linalg.eigh(hess)
    if np.any(evals <= 0):
        raise PulsecoolError(
            f"Hessian not positive definite (min eigenvalue {evals.min():.3e}); "
            "unstable configuration")
    freqs = np.sqrt(evals)
    uniform = np.ones(len(positions)) / math.sqrt(len(positions))
    com_index = int(np.argmax(np.abs(evecs.T @ uniform)))
    return freqs, evecs, com_index


def build_chain(n_ions: int, kind: str = "regular_trap",
                nu: float = 2 * math.pi * 1e6, spacing: float | None = None,
                mass_amu: float = CA40_MASS_AMU, charge: int = 1) -> ChainModel:
    positions = equilibrium_positions(n_ions, kind, spacing)
    if n_ions == 1:
        freqs = np.ones(1)
        vecs = np.ones((1, 1))
        com = 0
        local = np.ones(1)
        hess_diag = np.ones(1)
    else:
        freqs, vecs, com = normal_modes(positions)
        hess_diag = np.diag(_full_hessian(positions))
        local = np.sqrt(hess_diag)
    used_spacing = None
    if kind == "pinned_equidistant" and n_ions > 1:
        used_spacing = float(positions[1] - positions[0])
    return ChainModel(n_ions=n_ions, kind=kind, nu=nu,
                      length_scale=coulomb_length_scale(nu, mass_amu, charge),
                      positions=positions, mode_frequencies=freqs,
                      mode_vectors=vecs, local_frequencies=local,
                      com_index=com, spacing=used_spacing)


@dataclass(frozen=True)
class GaussianMotionalState:
    """Gaussian state of N axial modes: 2N×2N covariance in the ordering
    (x_1..x_N, p_1..p_N) plus first moments, in common units where the
    global ν = 1 oscillator has var(x) = var(p) = 1/2."""

    covariance: np.ndarray
    first_moments: np.ndarray

    def __post_init__(self):
        n2 = self.covariance.shape[0]
        if self.covariance.shape != (n2, n2) or n2 % 2 or len(self.first_moments) != n2:
            raise ValueError("covariance must be 2N×2N with matching first moments")


def symplectic_eigenvalues(covariance: np.ndarray) -> np.ndarray:
    """Symplectic spectrum of a covariance matrix; physical states have
    every value >= 1/2 (the uncertainty relation)."""
    n = covariance.shape[0] // 2
    omega = np.block([[np.zeros((n, n)), np.eye(n)], [-np.eye(n), np.zeros((n, n))]])
    ev = np.linalg.eigvals(1j * omega @ covariance)
    return np.sort(np.abs(np.real_if_close(ev)))[n:]


def local_ground_covariance(model: ChainModel) -> GaussianMotionalState:
    """Product of single-ion ground states, each at its local frequency.

    In each ion's own oscillator units the variances are 1/2; in the
    common units used here var(x_i) = 1/(2ω_i), var(p_i) = ω_i/2 with
    ω_i the local frequency in units of ν.
    """
    w = model.local_frequencies
    cov = np.diag(np.concatenate([1.0 / (2.0 * w), w / 2.0]))
    return GaussianMotionalState(covariance=cov,
                                 first_moments=np.zeros(2 * model.n_ions))


def mode_occupation(state: GaussianMotionalState, model: ChainModel,
                    mode_index: int) -> float:
    """Occupation of one normal mode: transform the covariance onto the
    mode vector, rescale to the mode's oscillator units, and evaluate
    n = (var(X̃)+var(P̃)-1)/2, clamped at 0."""
    n = model.n_ions
    b = model.mode_vectors[:, mode_index]
    mu = model.mode_frequencies[mode_index]
    var_x = float(b @ state.covariance[:n, :n] @ b)
    var_p = float(b @ state.covariance[n:, n:] @ b)
    occ = 0.5 * (mu * var_x + var_p / mu) - 0.5
    if occ < -1e-10:
        raise PulsecoolError(f"mode occupation {occ:.3e} below -1e-10")
    if occ < 0:
        warnings.warn(f"clamping tiny negative occupation {occ:.3e} to 0")
        occ = 0.0
    return occ


def com_occupation(state: GaussianMotionalState, model: ChainModel) -> float:
    """Average population of the center-of-mass mode."""
    return mode_occupation(state, model, model.com_index)


def chain_sweep(n_max: int, kinds=KINDS, nu: float = 2 * math.pi * 1e6,
                spacing: float | None = None) -> list[dict]:
    """COM occupation of the locally cooled chain for N = 1..n_max.

    Returns one row per (N, kind): dict with keys N, kind, spacing,
    nu_com (units of ν) and n_com.
    """
    if n_max < 2:
        raise ValueError("n_max must be >= 2")
    rows = []
    for kind in kinds:
        if kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        for n in range(1, n_max + 1):
            model = build_chain(n, kind, nu=nu, spacing=spacing)
            occ = com_occupation(local_ground_covariance(model), model)
            rows.append({
                "N": n,
                "kind": kind,
                "spacing": model.spacing if model.spacing is not None else math.nan,
                "nu_com": float(model.mode_frequencies[model.com_index]),
                "n_com": occ,
            })
    return rows
