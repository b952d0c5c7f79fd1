"""Numeric substrate: truncated Fock space, spin algebra, joint states.

Conventions used throughout the package (ħ = 1, all energies in rad/s):

* The joint Hilbert space is (2-level spin) ⊗ (Fock space truncated at
  ``n_fock`` levels), stored spin-major: joint index = ``s * n_fock + n``
  with spin index ``s = 0`` the excited state and ``s = 1`` the ground
  state.  With this ordering the Pauli matrices take their textbook form
  (``sigma_z = diag(+1, -1)`` on (|e>, |g>)) and the red-sideband identity
  ``a sigma+ + a† sigma- = (x̃ sigma_x - p̃ sigma_y)/sqrt(2)`` holds with
  a minus sign, as in the sideband decomposition this package implements.
* Dimensionless quadratures: ``x̃ = (a + a†)/sqrt(2)``,
  ``p̃ = i(a† - a)/sqrt(2)``, so ``[x̃, p̃] = i`` away from the truncation
  edge.
* Durations are in seconds; mean phonon numbers double as energies above
  the motional ground state in units of ħν.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidDimensionError, TruncationError

# Spin basis ordering: index 0 = excited |e>, index 1 = ground |g>.
E_IDX = 0
G_IDX = 1

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
SIGMA_PLUS = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)   # |e><g|
SIGMA_MINUS = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)  # |g><e|
IDENTITY_2 = np.eye(2, dtype=complex)


def sigma_theta(theta: float) -> np.ndarray:
    """Pseudo-spin operator cos(theta)*sigma_x + sin(theta)*sigma_y."""
    return math.cos(theta) * SIGMA_X + math.sin(theta) * SIGMA_Y


def max_abs(m: np.ndarray) -> float:
    """Elementwise max-norm, the operator comparison norm used everywhere."""
    return float(np.max(np.abs(m))) if m.size else 0.0


def unitarity_defect(u: np.ndarray) -> float:
    """Max-norm of U†U - I."""
    return max_abs(u.conj().T @ u - np.eye(u.shape[0]))


@dataclass(frozen=True)
class SystemParams:
    """Physical constants of one trap / ion configuration.

    Parameters
    ----------
    nu : float
        Angular trap frequency [rad/s].
    omega : float
        Effective Rabi frequency of the internal transition [rad/s].
    eta : float
        Lamb-Dicke parameter (dimensionless).  Taken as a direct input;
        it carries all of the coupling geometry.
    delta : float
        Detuning of the drive from the internal transition [rad/s].
    n_fock : int
        Fock-space truncation dimension (>= 2).
    guard_levels : int
        Width of the top-of-space guard band monitored for leakage.
    leak_threshold : float
        Maximum tolerated population in the guard band before a run is
        aborted with a :class:`TruncationError`.
    """

    nu: float = 2 * math.pi * 1e6
    omega: float = 2 * math.pi * 1e8
    eta: float = 0.31
    delta: float = 0.0
    n_fock: int = 60
    guard_levels: int = 6
    leak_threshold: float = 1e-4

    def __post_init__(self):
        if self.nu <= 0 or self.omega <= 0 or self.eta <= 0:
            raise ValueError("nu, omega and eta must all be positive")
        if self.n_fock < 2:
            raise InvalidDimensionError(f"n_fock must be >= 2, got {self.n_fock}")
        if self.guard_levels < 0 or self.guard_levels >= self.n_fock:
            raise ValueError("guard_levels must satisfy 0 <= guard_levels < n_fock")
        if self.leak_threshold <= 0:
            raise ValueError("leak_threshold must be positive")

    @property
    def dim(self) -> int:
        """Dimension of the joint spin ⊗ Fock space."""
        return 2 * self.n_fock

    @property
    def coupling(self) -> float:
        """Spin-motion coupling rate eta * omega [rad/s]."""
        return self.eta * self.omega


def default_guard_levels(n_fock: int) -> int:
    """Default guard band: 10% of the cutoff, at least one level."""
    return max(1, n_fock // 10)


def make_params(n_fock: int = 60, **kwargs) -> SystemParams:
    """SystemParams with the guard band sized from n_fock unless given."""
    kwargs.setdefault("guard_levels", default_guard_levels(n_fock))
    return SystemParams(n_fock=n_fock, **kwargs)


@dataclass(frozen=True)
class FockOperators:
    """Ladder and quadrature operators on the truncated Fock space."""

    n_fock: int
    a: np.ndarray
    a_dag: np.ndarray
    n_op: np.ndarray
    x_tilde: np.ndarray
    p_tilde: np.ndarray


def build_fock_operators(n_fock: int) -> FockOperators:
    """Construct a, a†, n, x̃, p̃ truncated at ``n_fock`` levels.

    a|n> = sqrt(n)|n-1> holds entrywise for 1 <= n < n_fock; the
    commutator [x̃, p̃] = i·I is exact except on the top truncation level.
    """
    if n_fock < 2:
        raise InvalidDimensionError(f"n_fock must be >= 2, got {n_fock}")
    a = np.diag(np.sqrt(np.arange(1, n_fock, dtype=float)), k=1).astype(complex)
    a_dag = a.conj().T
    n_op = a_dag @ a
    x_tilde = (a + a_dag) / math.sqrt(2.0)
    p_tilde = 1j * (a_dag - a) / math.sqrt(2.0)
    return FockOperators(n_fock=n_fock, a=a, a_dag=a_dag, n_op=n_op,
                         x_tilde=x_tilde, p_tilde=p_tilde)


def tensor_spin_fock(spin_op: np.ndarray, fock_op: np.ndarray) -> np.ndarray:
    """Kronecker product in the fixed spin-major ordering."""
    spin_op = np.asarray(spin_op, dtype=complex)
    fock_op = np.asarray(fock_op, dtype=complex)
    if spin_op.shape != (2, 2):
        raise InvalidDimensionError(f"spin operator must be 2x2, got {spin_op.shape}")
    if fock_op.ndim != 2 or fock_op.shape[0] != fock_op.shape[1]:
        raise InvalidDimensionError(f"Fock operator must be square, got {fock_op.shape}")
    return np.kron(spin_op, fock_op)


@dataclass(frozen=True)
class JointState:
    """Density matrix on the joint spin ⊗ Fock space.

    Treated as immutable after construction; operations return new states.
    """

    rho: np.ndarray
    n_fock: int
    guard_levels: int = 0

    def __post_init__(self):
        dim = 2 * self.n_fock
        if self.rho.shape != (dim, dim):
            raise InvalidDimensionError(
                f"rho must be {dim}x{dim} for n_fock={self.n_fock}, got {self.rho.shape}")

    @property
    def dim(self) -> int:
        return 2 * self.n_fock

    def trace(self) -> float:
        return float(np.real(np.trace(self.rho)))

    def phonon_distribution(self) -> np.ndarray:
        """Population of each Fock level, traced over the spin."""
        diag = np.real(np.diag(self.rho))
        return diag[: self.n_fock] + diag[self.n_fock:]

    def spin_populations(self) -> tuple[float, float]:
        """(excited, ground) populations."""
        diag = np.real(np.diag(self.rho))
        return float(diag[: self.n_fock].sum()), float(diag[self.n_fock:].sum())

    def guard_population(self) -> float:
        """Population in the top ``guard_levels`` Fock levels (top level if 0)."""
        levels = self.guard_levels if self.guard_levels > 0 else 1
        return float(self.phonon_distribution()[self.n_fock - levels:].sum())

    def validate(self, leak_threshold: float = 1e-4,
                 herm_tol: float = 1e-10, trace_tol: float = 1e-10,
                 eig_tol: float = 1e-8) -> None:
        """Check the density-matrix invariants, raising on violation."""
        if max_abs(self.rho - self.rho.conj().T) > herm_tol:
            raise ValueError("state is not Hermitian within tolerance")
        if abs(self.trace() - 1.0) > trace_tol:
            raise ValueError(f"state trace deviates from 1 by {abs(self.trace() - 1.0):.3e}")
        min_eig = float(np.min(np.linalg.eigvalsh((self.rho + self.rho.conj().T) / 2)))
        if min_eig < -eig_tol:
            raise ValueError(f"state has negative eigenvalue {min_eig:.3e}")
        leak = self.guard_population()
        if leak >= leak_threshold:
            raise TruncationError(
                f"guard-band population {leak:.3e} exceeds threshold {leak_threshold:.0e}",
                leak=leak)


def basis_state(params: SystemParams, spin: str, n: int) -> JointState:
    """Pure state |spin, n><spin, n| with spin 'g' or 'e'."""
    if spin not in ("g", "e"):
        raise ValueError("spin must be 'g' or 'e'")
    if not 0 <= n < params.n_fock:
        raise InvalidDimensionError(f"Fock level {n} outside [0, {params.n_fock})")
    idx = (G_IDX if spin == "g" else E_IDX) * params.n_fock + n
    rho = np.zeros((params.dim, params.dim), dtype=complex)
    rho[idx, idx] = 1.0
    return JointState(rho=rho, n_fock=params.n_fock, guard_levels=params.guard_levels)


def thermal_state(params: SystemParams, nbar: float) -> JointState:
    """Spin ground state ⊗ thermal motional state with mean ``nbar``.

    The motional populations follow p(n) ∝ (nbar/(1+nbar))^n, renormalized
    over the truncated space.  Raises :class:`TruncationError` when the
    guard band of the truncation would already hold more than the leak
    threshold, i.e. when nbar is too large for n_fock.
    """
    if nbar < 0:
        raise ValueError("nbar must be non-negative")
    n = np.arange(params.n_fock, dtype=float)
    if nbar == 0:
        weights = np.zeros(params.n_fock)
        weights[0] = 1.0
    else:
        r = nbar / (1.0 + nbar)
        # log-space for numerical stability at large n
        weights = np.exp(n * math.log(r) - math.log(1.0 + nbar))
    weights = weights / weights.sum()
    levels = params.guard_levels if params.guard_levels > 0 else 1
    leak = float(weights[params.n_fock - levels:].sum())
    if leak >= params.leak_threshold:
        raise TruncationError(
            f"thermal state with nbar={nbar} puts {leak:.3e} in the guard band "
            f"of n_fock={params.n_fock}; raise the cutoff",
            leak=leak)
    spin_g = np.zeros((2, 2), dtype=complex)
    spin_g[G_IDX, G_IDX] = 1.0
    rho = np.kron(spin_g, np.diag(weights.astype(complex)))
    return JointState(rho=rho, n_fock=params.n_fock, guard_levels=params.guard_levels)


def mean_phonons(state: JointState) -> float:
    """Tr(rho · (I ⊗ a†a)): mean phonon number / energy in units of ħν."""
    occ = state.phonon_distribution()
    value = float(np.dot(np.arange(state.n_fock), occ))
    if value < -1e-8:
        raise ValueError(f"mean phonon number {value:.3e} is significantly negative")
    return max(value, 0.0)


# ---------------------------------------------------------------------------
# Dense matrix exponential: scaling-and-squaring with Padé approximants
# (Higham 2005 coefficients), cross-validated against the eigendecomposition
# route for Hermitian generators.
# ---------------------------------------------------------------------------

_PADE_THETA = {
    3: 1.495585217958292e-2,
    5: 2.539398330063230e-1,
    7: 9.504178996162932e-1,
    9: 2.097847961257068,
    13: 5.371920351148152,
}

_PADE_B = {
    3: [120.0, 60.0, 12.0, 1.0],
    5: [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0],
    7: [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0],
    9: [17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
        2162160.0, 110880.0, 3960.0, 90.0, 1.0],
    13: [64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
         1187353796428800.0, 129060195264000.0, 10559470521600.0,
         670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
         960960.0, 16380.0, 182.0, 1.0],
}


def _pade_approximant(m: int, a: np.ndarray) -> np.ndarray:
    b = _PADE_B[m]
    n = a.shape[0]
    ident = np.eye(n, dtype=complex)
    if m == 13:
        a2 = a @ a
        a4 = a2 @ a2
        a6 = a2 @ a4
        u = a @ (a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2)
                 + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident)
        v = (a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2)
             + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident)
    else:
        powers = [ident, a @ a]
        for _ in range(2, (m + 1) // 2):
            powers.append(powers[-1] @ powers[1])
        u = np.zeros_like(a)
        v = np.zeros_like(a)
        for k, p in enumerate(powers):
            u = u + b[2 * k + 1] * p
            v = v + b[2 * k] * p
        u = a @ u
    return np.linalg.solve(-u + v, u + v)


def expm(m: np.ndarray) -> np.ndarray:
    """exp(M) of a dense square matrix via Padé scaling-and-squaring."""
    m = np.asarray(m, dtype=complex)
    norm = float(np.linalg.norm(m, 1)) if m.size else 0.0
    if norm <= _PADE_THETA[13]:
        for order in (3, 5, 7, 9, 13):
            if norm <= _PADE_THETA[order]:
                return _pade_approximant(order, m)
    s = max(0, int(math.ceil(math.log2(norm / _PADE_THETA[13]))))
    f = _pade_approximant(13, m / (2.0 ** s))
    for _ in range(s):
        f = f @ f
    return f


def _check_hermitian(h: np.ndarray) -> None:
    scale = max(1.0, max_abs(h))
    if max_abs(h - h.conj().T) > 1e-10 * scale:
        raise ValueError("generator is not Hermitian within tolerance")


def matrix_exp(h: np.ndarray, t: float, validate: bool = True) -> np.ndarray:
    """U = exp(-i·h·t) for a Hermitian generator ``h``.

    Primary route (Padé scaling-and-squaring).  ``validate`` additionally
    checks ‖U†U - I‖_max < 1e-9; disable it only inside hot loops that are
    covered by the cross-validation tests.
    """
    h = np.asarray(h, dtype=complex)
    _check_hermitian(h)
    u = expm(-1j * t * h)
    if validate:
        defect = unitarity_defect(u)
        if defect > 1e-9:
            raise ValueError(f"propagator unitarity defect {defect:.3e} exceeds 1e-9")
    return u


def matrix_exp_eigh(h: np.ndarray, t: float) -> np.ndarray:
    """exp(-i·h·t) via eigendecomposition; the independent cross-check route."""
    h = np.asarray(h, dtype=complex)
    _check_hermitian(h)
    evals, evecs = np.linalg.eigh(h)
    return (evecs * np.exp(-1j * t * evals)) @ evecs.conj().T


def apply_unitary(state: JointState, u: np.ndarray,
                  leak_threshold: float | None = None) -> JointState:
    """rho -> U rho U†, with a guard-band leak check on the result."""
    if u.shape != (state.dim, state.dim):
        raise InvalidDimensionError(
            f"unitary shape {u.shape} does not match state dimension {state.dim}")
    rho = u @ state.rho @ u.conj().T
    out = JointState(rho=rho, n_fock=state.n_fock, guard_levels=state.guard_levels)
    if leak_threshold is not None:
        leak = out.guard_population()
        if leak >= leak_threshold:
            raise TruncationError(
                f"guard-band population {leak:.3e} exceeds threshold {leak_threshold:.0e} "
                "after applying a propagator", leak=leak)
    return out


def phase_aligned_distance(u: np.ndarray, v: np.ndarray) -> tuple[float, float]:
    """Max-norm distance between u and v after global-phase alignment.

    The alignment phase phi maximizes |Tr(u† v)|; returns (distance, phi)
    where distance = ‖u - e^{-i phi} v‖_max.  Physical predictions never
    depend on the global phase, so all operator comparisons go through
    this helper.
    """
    overlap = np.trace(u.conj().T @ v)
    phi = float(np.angle(overlap)) if abs(overlap) > 0 else 0.0
    return max_abs(u - np.exp(-1j * phi) * v), phi
