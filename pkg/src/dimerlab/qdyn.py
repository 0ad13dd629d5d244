"""Exact small-matrix quantum mechanics for the biased two-site dimer.

Pauli algebra, the 2x2 site-basis Hamiltonian, closed-form propagators,
eigenbasis transforms, column-major vectorization, and Boltzmann/Gibbs
equilibrium populations.  Everything here is a pure function of its inputs.

Site basis convention: |s1> is the higher-energy site, |s2> the lower one,
so the Hamiltonian is H = eps*sigma_z + j*sigma_x with eps >= 0.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
IDENTITY_2 = np.eye(2, dtype=complex)

HERMITICITY_TOL = 1e-10
TRACE_TOL = 1e-10
EIGENVALUE_FLOOR = -1e-9


@dataclass(frozen=True)
class SystemParams:
    """Dimer system parameters: energy bias and tunneling (hbar = 1 units).

    ``epsilon`` is half the site-energy gap; by convention it is
    non-negative so that |s1> is the higher-energy site.
    """

    epsilon: float
    j_coupling: float

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if not np.isfinite(self.epsilon) or not np.isfinite(self.j_coupling):
            raise ValueError("system parameters must be finite")

    @property
    def rabi_frequency(self) -> float:
        """Omega = sqrt(eps^2 + J^2), half the p1 oscillation frequency."""
        return float(np.hypot(self.epsilon, self.j_coupling))


class EnergyModel(enum.Enum):
    """How the equilibrium population of |s1> is computed.

    SITE_ENERGIES uses the bare site energies +-eps (Boltzmann ratio on the
    localized states).  GIBBS_OF_H uses the full Gibbs state of H, which
    differs whenever J != 0 because |s1> is then not an eigenstate.
    """

    SITE_ENERGIES = "site-energies"
    GIBBS_OF_H = "gibbs-of-h"


def check_density(rho: np.ndarray, *, herm_tol: float = HERMITICITY_TOL,
                  trace_tol: float = TRACE_TOL,
                  eig_floor: float = EIGENVALUE_FLOOR) -> np.ndarray:
    """Validate a density matrix (any dimension): Hermitian, unit trace, PSD.

    Returns the input as a complex ndarray; raises ValueError on violation.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"density matrix must be square, got shape {rho.shape}")
    if np.abs(rho - rho.conj().T).max() > herm_tol:
        raise ValueError("density matrix is not Hermitian within tolerance")
    if abs(np.trace(rho) - 1.0) > trace_tol:
        raise ValueError(f"density matrix trace {np.trace(rho)} != 1 within tolerance")
    evals = np.linalg.eigvalsh(rho)
    if evals.min() < eig_floor:
        raise ValueError(f"density matrix has negative eigenvalue {evals.min()}")
    return rho


def build_hamiltonian(params: SystemParams) -> np.ndarray:
    """Site-basis dimer Hamiltonian [[eps, J], [J, -eps]]."""
    return params.epsilon * SIGMA_Z + params.j_coupling * SIGMA_X


def propagator(hamiltonian: np.ndarray, t: float) -> np.ndarray:
    """Closed-form e^{-iHt} for a traceless Hermitian 2x2 Hamiltonian.

    Uses H^2 = Omega^2 * I:  e^{-iHt} = cos(Omega t) I - i sin(Omega t) H/Omega.
    Omega = 0 returns the identity exactly.
    """
    h = np.asarray(hamiltonian, dtype=complex)
    omega = np.sqrt(abs(h[0, 0]) ** 2 + abs(h[0, 1]) ** 2)
    if omega == 0.0:
        return IDENTITY_2.copy()
    return np.cos(omega * t) * IDENTITY_2 - 1j * np.sin(omega * t) * h / omega


def rabi_population(params: SystemParams, t) -> float | np.ndarray:
    """Closed-system population of |s1> at time t, starting from |s1>.

    p1(t) = 1 - (J^2/Omega^2) sin^2(Omega t).  Accepts scalars or arrays.
    """
    omega = params.rabi_frequency
    if omega == 0.0:
        return np.ones_like(np.asarray(t, dtype=float)) if np.ndim(t) else 1.0
    ratio = (params.j_coupling / omega) ** 2
    return 1.0 - ratio * np.sin(omega * np.asarray(t)) ** 2 if np.ndim(t) \
        else 1.0 - ratio * np.sin(omega * t) ** 2


def eigenbasis(hamiltonian: np.ndarray) -> np.ndarray:
    """Unitary U whose columns are eigenvectors of H, eigenvalues descending.

    Phase convention: the first nonzero component of each column is real
    and positive, so the transform is reproducible run-to-run.
    """
    h = np.asarray(hamiltonian, dtype=complex)
    evals, vecs = np.linalg.eigh(h)
    order = np.argsort(evals)[::-1]
    vecs = vecs[:, order]
    for i in range(vecs.shape[1]):
        col = vecs[:, i]
        nonzero = col[np.abs(col) > 1e-12]
        if nonzero.size:
            phase = nonzero[0] / abs(nonzero[0])
            vecs[:, i] = col / phase
    return vecs


def gibbs_population(params: SystemParams, kT: float,
                     model: EnergyModel = EnergyModel.SITE_ENERGIES) -> float:
    """Equilibrium population Q of |s1> at thermal energy kT.

    SITE_ENERGIES: Q = 1/(1 + e^{2 eps / kT}).
    GIBBS_OF_H:    Q = <s1| e^{-H/kT} |s1> / Tr e^{-H/kT}.
    """
    if kT <= 0:
        raise ValueError(f"kT must be positive, got {kT}")
    if model is EnergyModel.SITE_ENERGIES:
        return 1.0 / (1.0 + np.exp(2.0 * params.epsilon / kT))
    h = build_hamiltonian(params)
    evals, vecs = np.linalg.eigh(h)
    weights = np.exp(-(evals - evals.min()) / kT)
    probs = weights / weights.sum()
    # <s1| e^{-H/kT} |s1> = sum_i p_i |<s1|E_i>|^2
    return float(np.sum(probs * np.abs(vecs[0, :]) ** 2))


def vectorize(rho: np.ndarray) -> np.ndarray:
    """Column-stack a 2x2 matrix into a length-4 vector (column-major)."""
    return np.asarray(rho, dtype=complex).reshape(4, order="F")


def devectorize(vec: np.ndarray) -> np.ndarray:
    """Inverse of :func:`vectorize`."""
    vec = np.asarray(vec, dtype=complex)
    if vec.shape != (4,) and vec.shape != (4, 1):
        raise ValueError(f"expected a length-4 vector, got shape {vec.shape}")
    return vec.reshape(2, 2, order="F")
