"""Transfer tensor method: learn short dynamics, extend them.

Dynamical maps E_k are extracted from four trajectories started in the
canonical initial states (I+Z)/2, (I-Z)/2, (I+X)/2, (I+Y)/2 by inverting
the 4x4 matrix of vectorized initial states.  Transfer tensors follow the
recursion T_n = E_n - sum_{m=1}^{n-1} T_{n-m} E_m, and dynamics beyond the
training window are generated by the memory convolution
rho(t_n) = sum_{k=1}^{n_k} T_k rho(t_{n-k}).

All superoperators act on column-major vectorized 2x2 density matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .qdyn import IDENTITY_2, SIGMA_X, SIGMA_Y, SIGMA_Z, devectorize, vectorize

CANONICAL_INITIAL_STATES = (
    0.5 * (IDENTITY_2 + SIGMA_Z),
    0.5 * (IDENTITY_2 - SIGMA_Z),
    0.5 * (IDENTITY_2 + SIGMA_X),
    0.5 * (IDENTITY_2 + SIGMA_Y),
)


class IllConditionedBasisError(ValueError):
    """Initial-state matrix too ill-conditioned to invert."""


class ExtensionDivergenceError(RuntimeError):
    """An extension step lost essentially all trace."""


@dataclass
class TrajectorySet:
    """Uniformly sampled trajectories, one per initial state.

    ``trajectories[i][k]`` is the 2x2 state of trajectory i at t0 + k*dt.
    Four trajectories from the canonical initial states are the standard
    input; more are allowed (least-squares map extraction kicks in).
    """

    dt: float
    t0: float
    trajectories: list[list[np.ndarray]]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        lengths = {len(traj) for traj in self.trajectories}
        if len(lengths) != 1 or lengths.pop() < 2:
            raise ValueError("all trajectories must have equal length >= 2")
        if len(self.trajectories) < 4:
            raise ValueError("need at least four trajectories")

    @property
    def n_steps(self) -> int:
        return len(self.trajectories[0]) - 1

    @classmethod
    def from_times(cls, times, trajectories, rtol: float = 1e-9) -> "TrajectorySet":
        """Build from an explicit time axis; resamples non-uniform grids.

        Non-uniform input is linearly interpolated onto a uniform grid with
        the same endpoints and point count; ``meta['resampled']`` flags it.
        """
        times = np.asarray(times, dtype=float)
        steps = np.diff(times)
        if np.any(steps <= 0):
            raise ValueError("times must be strictly increasing")
        dt = steps.mean()
        if np.allclose(steps, dt, rtol=rtol, atol=0):
            return cls(dt=float(dt), t0=float(times[0]),
                       trajectories=[list(t) for t in trajectories])
        uniform = np.linspace(times[0], times[-1], times.size)
        resampled = []
        for traj in trajectories:
            stack = np.array(traj)  # (n_t, 2, 2)
            flat = np.empty((uniform.size, 4), dtype=complex)
            for j in range(4):
                comp = stack.reshape(stack.shape[0], 4)[:, j]
                flat[:, j] = (np.interp(uniform, times, comp.real)
                              + 1j * np.interp(uniform, times, comp.imag))
            resampled.append([flat[k].reshape(2, 2) for k in range(uniform.size)])
        return cls(dt=float(uniform[1] - uniform[0]), t0=float(times[0]),
                   trajectories=resampled, meta={"resampled": True})


@dataclass
class DynamicalMapSet:
    """Superoperators E_k mapping rho(t0) to rho(t_k); E_0 = I implicit."""

    dt: float
    maps: list[np.ndarray]


@dataclass
class TransferTensorSet:
    """Memory kernels T_n on the same grid as the maps they came from."""

    dt: float
    tensors: list[np.ndarray]


def _stack_states(states) -> np.ndarray:
    return np.column_stack([vectorize(rho) for rho in states])


def build_dynamical_maps(trajs: TrajectorySet) -> DynamicalMapSet:
    """E_k = R(t_k) R(t0)^{-1} with R stacking vectorized trajectory states.

    Uses direct inversion for exactly four trajectories, least squares
    otherwise.  Raises IllConditionedBasisError when cond(R(t0)) > 1e8.
    """
    r0 = _stack_states([traj[0] for traj in trajs.trajectories])
    cond = np.linalg.cond(r0)
    if cond > 1e8:
        raise IllConditionedBasisError(
            f"initial-state matrix condition number {cond:.3g} exceeds 1e8")
    if r0.shape[1] == 4:
        r0_inv = np.linalg.inv(r0)
    else:
        r0_inv = np.linalg.pinv(r0)
    maps = []
    for k in range(1, trajs.n_steps + 1):
        rk = _stack_states([traj[k] for traj in trajs.trajectories])
        maps.append(rk @ r0_inv)
    return DynamicalMapSet(dt=trajs.dt, maps=maps)


def transfer_tensors(maps: DynamicalMapSet) -> TransferTensorSet:
    """T_1 = E_1; T_n = E_n - sum_{m=1}^{n-1} T_{n-m} E_m."""
    if not maps.maps:
        raise ValueError("need at least one dynamical map")
    e = maps.maps
    tensors: list[np.ndarray] = [e[0].copy()]
    for n in range(2, len(e) + 1):
        acc = e[n - 1].copy()
        for m in range(1, n):
            acc -= tensors[n - m - 1] @ e[m - 1]
        tensors.append(acc)
    return TransferTensorSet(dt=maps.dt, tensors=tensors)


def reconstruct(tensors: TransferTensorSet, rho0: np.ndarray, n: int) -> np.ndarray:
    """rho(t_n) from rho0 via the convolution over already-built history."""
    if not 1 <= n <= len(tensors.tensors):
        raise IndexError(f"n={n} outside 1..{len(tensors.tensors)}")
    history = [vectorize(rho0)]
    for step in range(1, n + 1):
        acc = np.zeros(4, dtype=complex)
        for k in range(step):
            acc += tensors.tensors[step - k - 1] @ history[k]
        history.append(acc)
    return devectorize(history[n])


def extend_dynamics(tensors: TransferTensorSet, history: list[np.ndarray],
                    n_target: int) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Iterate rho(t_n) = sum_{k=1}^{n_k} T_k rho(t_{n-k}) up to n_target.

    ``history`` must hold rho(t_0)..rho(t_{n_k}) on the tensor grid.
    Returns (physical, raw): the full series including the history, where
    each appended state is re-Hermitized and trace-renormalized in
    ``physical`` and left untouched in ``raw``.
    """
    n_k = len(tensors.tensors)
    if len(history) != n_k + 1:
        raise ValueError(f"history must have length n_k+1 = {n_k + 1}, "
                         f"got {len(history)}")
    if n_target < n_k:
        raise IndexError("n_target must be >= the training horizon")
    physical = [np.asarray(r, dtype=complex).copy() for r in history]
    raw = [r.copy() for r in physical]
    vecs = [vectorize(r) for r in physical]
    for n in range(n_k + 1, n_target + 1):
        acc = np.zeros(4, dtype=complex)
        for k in range(1, n_k + 1):
            acc += tensors.tensors[k - 1] @ vecs[n - k]
        rho = devectorize(acc)
        raw.append(rho.copy())
        rho = 0.5 * (rho + rho.conj().T)
        tr = np.trace(rho).real
        if tr < 1e-6:
            raise ExtensionDivergenceError(
                f"trace collapsed to {tr} at extension step {n}")
        rho = rho / tr
        physical.append(rho)
        vecs.append(vectorize(rho))
    return physical, raw


def save_superop_set(path, dt: float, matrices: list[np.ndarray]) -> None:
    """Serialize maps/tensors: header with dt and count, one block per index.

    Each block holds the 16 complex entries row-major as "re,im" pairs at
    17 significant digits (lossless decimal round trip).
    """
    with open(path, "w") as fh:
        fh.write(f"dt={dt:.17g} n_k={len(matrices)}\n")
        for k, mat in enumerate(matrices, start=1):
            fh.write(f"k={k}\n")
            for entry in np.asarray(mat, dtype=complex).reshape(16):
                fh.write(f"{entry.real:.17g},{entry.imag:.17g}\n")


def load_superop_set(path) -> tuple[float, list[np.ndarray]]:
    """Inverse of :func:`save_superop_set`."""
    with open(path) as fh:
        header = fh.readline().split()
        dt = float(header[0].split("=")[1])
        n_k = int(header[1].split("=")[1])
        matrices = []
        for _ in range(n_k):
            fh.readline()  # "k=..." marker
            entries = []
            for _ in range(16):
                re, im = fh.readline().strip().split(",")
                entries.append(complex(float(re), float(im)))
            matrices.append(np.array(entries, dtype=complex).reshape(4, 4))
    return dt, matrices
