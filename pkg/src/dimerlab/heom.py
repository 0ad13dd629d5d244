"""Hierarchical-equations-of-motion solver for the dissipative dimer.

Numerically exact reference dynamics of the two-site system, each site
coupled to its own Drude-Lorentz bath through the projector |i><i|.  The
bath correlation function is expanded as a Drude pole plus Matsubara
exponentials; the residual Matsubara tail is always folded in as a
Markovian (double-commutator) correction so the hierarchy converges fast
in the number of retained terms.  The truncated tier can optionally be
closed adiabatically instead of being set to zero.

Auxiliary operators are indexed by a tuple of occupation numbers, one per
(site, exponent) mode, enumerated breadth first over total occupation <= L.
The whole hierarchy is assembled once as a sparse linear operator and
integrated with an adaptive embedded Runge-Kutta scheme.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp

from .circuit import PopulationTrace
from .qdyn import SystemParams, build_hamiltonian


class DegeneratePoleError(ValueError):
    """Raised when the Drude pole collides with a Matsubara frequency."""


class HeomIntegrationError(RuntimeError):
    """Integration failed; carries the time actually reached."""

    def __init__(self, message: str, t_reached: float):
        super().__init__(message)
        self.t_reached = t_reached


@dataclass(frozen=True)
class BathParams:
    """Drude-Lorentz bath: reorganization energy, cutoff, thermal energy."""

    lam: float
    gamma: float
    kT: float

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if not self.kT > 0:
            raise ValueError(f"kT must be > 0, got {self.kT}")


@dataclass(frozen=True)
class BathExponents:
    """Exponential expansion C(t) = sum_k c_k exp(-nu_k t), t >= 0."""

    amplitudes: tuple[complex, ...]
    rates: tuple[float, ...]

    def correlation(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        c = np.array(self.amplitudes)[:, None]
        nu = np.array(self.rates)[:, None]
        return (c * np.exp(-nu * t[None, :])).sum(axis=0)


@dataclass(frozen=True)
class HeomConfig:
    depth: int = 10
    matsubara: int = 3
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    terminator: bool = True

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.matsubara < 0:
            raise ValueError("matsubara must be >= 0")
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")


def spectral_density(omega, bath: BathParams):
    """Drude-Lorentz J(omega) = (lam/2) * gamma*omega / (gamma^2 + omega^2)."""
    omega = np.asarray(omega, dtype=float)
    out = 0.5 * bath.lam * bath.gamma * omega / (bath.gamma ** 2 + omega ** 2)
    return out if out.ndim else float(out)


def bath_exponents(bath: BathParams, K: int) -> BathExponents:
    """Drude pole plus K Matsubara exponentials of the correlation function.

    c_0 = lam*gamma*(cot(gamma/2kT) - i), nu_0 = gamma;
    c_k = 4*lam*gamma*kT*nu_k / (nu_k^2 - gamma^2), nu_k = 2*pi*kT*k.
    """
    if K < 0:
        raise ValueError("K must be >= 0")
    lam, gamma, kT = bath.lam, bath.gamma, bath.kT
    amps = [lam * gamma * (1.0 / np.tan(gamma / (2.0 * kT)) - 1.0j)]
    rates = [gamma]
    for k in range(1, K + 1):
        nu = 2.0 * np.pi * kT * k
        if abs(nu - gamma) < 1e-9:
            raise DegeneratePoleError(
                f"gamma={gamma} coincides with Matsubara frequency {nu} (k={k})")
        amps.append(complex(4.0 * lam * gamma * kT * nu / (nu ** 2 - gamma ** 2)))
        rates.append(nu)
    if lam == 0.0:
        amps = [0.0j] * len(amps)
    return BathExponents(tuple(amps), tuple(rates))


def matsubara_tail(bath: BathParams, K: int) -> float:
    """sum_{k>K} c_k/nu_k, the Markovian weight of the dropped Matsubara terms.

    Uses the closed form sum_{k>=1} c_k/nu_k = 2*lam*kT/gamma - lam*cot(gamma/2kT)
    and subtracts the retained terms.
    """
    lam, gamma, kT = bath.lam, bath.gamma, bath.kT
    total = 2.0 * lam * kT / gamma - lam / np.tan(gamma / (2.0 * kT))
    retained = 0.0
    for k in range(1, K + 1):
        nu = 2.0 * np.pi * kT * k
        retained += 4.0 * lam * gamma * kT / (nu ** 2 - gamma ** 2)
    return total - retained


def _enumerate_ados(n_modes: int, depth: int) -> list[tuple[int, ...]]:
    """All occupation tuples with sum <= depth, breadth first by tier."""
    tiers = [[(0,) * n_modes]]
    for _ in range(depth):
        prev, seen = tiers[-1], set()
        nxt = []
        for n in prev:
            for m in range(n_modes):
                up = n[:m] + (n[m] + 1,) + n[m + 1:]
                if up not in seen:
                    seen.add(up)
                    nxt.append(up)
        tiers.append(sorted(nxt))
    return [n for tier in tiers for n in tier]


def _commutator_super(a: np.ndarray) -> np.ndarray:
    ident = np.eye(a.shape[0], dtype=complex)
    return np.kron(ident, a) - np.kron(a.T, ident)


def _left_super(a: np.ndarray) -> np.ndarray:
    return np.kron(np.eye(a.shape[0], dtype=complex), a)


def _right_super(a: np.ndarray) -> np.ndarray:
    return np.kron(a.T, np.eye(a.shape[0], dtype=complex))


def _build_liouvillian(params: SystemParams, baths: tuple[BathParams, BathParams],
                       cfg: HeomConfig) -> tuple[sp.csr_matrix, list[tuple[int, ...]]]:
    site_projectors = (np.diag([1.0, 0.0]).astype(complex),
                       np.diag([0.0, 1.0]).astype(complex))
    exponents = [bath_exponents(b, cfg.matsubara) for b in baths]
    tails = [matsubara_tail(b, cfg.matsubara) for b in baths]

    # modes: (site, exponent index) pairs, flattened
    mode_site, mode_c, mode_nu = [], [], []
    for b in (0, 1):
        for c, nu in zip(exponents[b].amplitudes, exponents[b].rates):
            mode_site.append(b)
            mode_c.append(c)
            mode_nu.append(nu)
    n_modes = len(mode_site)
    mode_nu = np.array(mode_nu)

    ados = _enumerate_ados(n_modes, cfg.depth)
    index = {n: i for i, n in enumerate(ados)}
    dim = 4 * len(ados)

    h_super = -1j * _commutator_super(build_hamiltonian(params))
    q_comm = [_commutator_super(q) for q in site_projectors]
    q_left = [_left_super(q) for q in site_projectors]
    q_right = [_right_super(q) for q in site_projectors]
    # always-on Markovian closure of the dropped Matsubara tail
    tail_super = sum(-tails[b] * (q_comm[b] @ q_comm[b]) for b in (0, 1))

    rows, cols, vals = [], [], []

    def add_block(i: int, j: int, block: np.ndarray):
        r, c = np.nonzero(block)
        rows.append(r + 4 * i)
        cols.append(c + 4 * j)
        vals.append(block[r, c])

    for n, i in index.items():
        n_arr = np.array(n)
        diag = h_super + tail_super - float(n_arr @ mode_nu) * np.eye(4)
        for m in range(n_modes):
            b = mode_site[m]
            if sum(n) < cfg.depth:
                up = n[:m] + (n[m] + 1,) + n[m + 1:]
                add_block(i, index[up], -1j * q_comm[b])
            elif cfg.terminator:
                # adiabatic closure of the dropped tier-(L+1) neighbor
                nu_up = float(n_arr @ mode_nu) + mode_nu[m]
                c = mode_c[m]
                closure = -((n[m] + 1) / nu_up) * (
                    q_comm[b] @ (c * q_left[b] - np.conj(c) * q_right[b]))
                diag = diag + closure
            if n[m] > 0:
                down = n[:m] + (n[m] - 1,) + n[m + 1:]
                c = mode_c[m]
                add_block(i, index[down],
                          -1j * n[m] * (c * q_left[b] - np.conj(c) * q_right[b]))
        add_block(i, i, diag)

    liouv = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(dim, dim))
    return liouv, ados


def _as_bath_pair(baths) -> tuple[BathParams, BathParams]:
    if isinstance(baths, BathParams):
        return (baths, baths)
    pair = tuple(baths)
    if len(pair) != 2 or not all(isinstance(b, BathParams) for b in pair):
        raise TypeError("baths must be a BathParams or a pair of them")
    return pair


def heom_propagate(params: SystemParams, baths, cfg: HeomConfig,
                   rho0: np.ndarray, t_grid) -> list[np.ndarray]:
    """Propagate rho0 through the hierarchy; returns rho_S at each grid time."""
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.size == 0 or t_grid[0] < 0 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be increasing and start at >= 0")
    rho0 = np.asarray(rho0, dtype=complex)
    if t_grid[-1] == 0.0:
        return [rho0.copy()]
    pair = _as_bath_pair(baths)
    liouv, ados = _build_liouvillian(params, pair, cfg)

    y0 = np.zeros(liouv.shape[0], dtype=complex)
    y0[:4] = rho0.reshape(4, order="F")

    t0 = t_grid[0]
    eval_times = t_grid
    if t0 > 0.0:
        eval_times = np.concatenate([[0.0], t_grid])

    sol = solve_ivp(lambda t, y: liouv @ y, (0.0, float(t_grid[-1])), y0,
                    method="RK45", t_eval=eval_times,
                    rtol=cfg.rel_tol, atol=cfg.abs_tol)
    if not sol.success:
        reached = float(sol.t[-1]) if sol.t.size else 0.0
        raise HeomIntegrationError(
            f"HEOM integration failed: {sol.message}", reached)

    states = []
    offset = 1 if t0 > 0.0 else 0
    for k in range(t_grid.size):
        rho = sol.y[:4, offset + k].reshape(2, 2, order="F")
        states.append(0.5 * (rho + rho.conj().T))
    return states


def heom_population_trace(params: SystemParams, baths, cfg: HeomConfig,
                          t_grid) -> PopulationTrace:
    """Populations of an initial-|s1> propagation on the given grid."""
    rho0 = np.diag([1.0, 0.0]).astype(complex)
    states = heom_propagate(params, baths, cfg, rho0, t_grid)
    p1 = np.array([r[0, 0].real for r in states])
    p2 = np.array([r[1, 1].real for r in states])
    return PopulationTrace(times=np.asarray(t_grid, dtype=float), p1=p1, p2=p2,
                           rho_series=states)
