"""Two-qubit density-matrix circuit simulator with per-gate noise.

The dimer states are encoded on two qubits: |10> = |s1> (higher-energy site
excited), |01> = |s2>.  A circuit for time t is a dissipation prefix of
repeated (XZXZZ)^2 identity blocks, whose per-gate noise emulates the bath,
followed by a Trotterized system propagator built from an XX+YY interaction
gate (the tunneling term, exact on the single-excitation subspace) and a
pair of opposite-sign RZ rotations (the bias term).

Basis ordering is {|00>, |01>, |10>, |11>} with qubit 0 the left bit, so
|s1> is index 2 and |s2> is index 1.

Noise model: every physical X gate is composed with an extra rotation about
X (over-rotation), and every gate is followed by a depolarizing channel
rho -> (1-p) rho + (p/3)(X rho X + Y rho Y + Z rho Z) on each touched qubit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .qdyn import IDENTITY_2, SIGMA_X, SIGMA_Y, SIGMA_Z, SystemParams

IDX_S1 = 2  # |10>
IDX_S2 = 1  # |01>

_PAULIS = (SIGMA_X, SIGMA_Y, SIGMA_Z)


class DegenerateStateError(ValueError):
    """Raised when the single-excitation subspace weight is negligible."""


@dataclass(frozen=True)
class NoiseConfig:
    """Per-gate noise strengths of the simulator."""

    depol_1q: float = 0.0
    depol_2q: float = 0.0
    overrotation_x: float = 0.0
    readout_flip: float = 0.0

    def __post_init__(self):
        for name in ("depol_1q", "depol_2q", "readout_flip"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {p}")
        if not np.isfinite(self.overrotation_x):
            raise ValueError("overrotation_x must be finite")


NOISELESS = NoiseConfig()


@dataclass(frozen=True)
class TrotterSchedule:
    """Number-of-steps rule: fixed M, or M = ceil(t / dt_target)."""

    mode: str  # "constant" | "linear"
    m_const: int = 10
    dt_target: float = 0.4

    def __post_init__(self):
        if self.mode not in ("constant", "linear"):
            raise ValueError(f"unknown trotter mode {self.mode!r}")
        if self.mode == "constant" and self.m_const < 1:
            raise ValueError("constant schedule needs M >= 1")
        if self.mode == "linear" and not self.dt_target > 0:
            raise ValueError("linear schedule needs dt_target > 0")

    @classmethod
    def constant(cls, m: int) -> "TrotterSchedule":
        return cls(mode="constant", m_const=m)

    @classmethod
    def linear(cls, dt_target: float) -> "TrotterSchedule":
        return cls(mode="linear", dt_target=dt_target)


@dataclass(frozen=True)
class Gate:
    """One gate record: kind in {X, Z, RX, RZ, XXplusYY}, targets, angle."""

    kind: str
    targets: tuple[int, ...]
    theta: float = 0.0

    def __post_init__(self):
        if any(q not in (0, 1) for q in self.targets):
            raise ValueError(f"targets must be in {{0, 1}}, got {self.targets}")
        if not np.isfinite(self.theta):
            raise ValueError("gate angle must be finite")


@dataclass
class PopulationTrace:
    """Site populations over a time grid, with optional exact-mode states."""

    times: np.ndarray
    p1: np.ndarray
    p2: np.ndarray
    rho_series: list[np.ndarray] | None = None
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.p1 = np.asarray(self.p1, dtype=float)
        self.p2 = np.asarray(self.p2, dtype=float)
        if self.times.size and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")


def trotter_steps(schedule: TrotterSchedule, t: float) -> int:
    """Steps M for simulated time t; t = 0 yields a single empty step."""
    if t < 0:
        raise ValueError("time must be nonnegative")
    if schedule.mode == "constant":
        return schedule.m_const
    return max(1, math.ceil(t / schedule.dt_target))


def build_trotter_circuit(params: SystemParams, t: float, m: int) -> list[Gate]:
    """M repetitions of the first-order step for e^{-iHt}.

    Each step applies the bias rotation first (RZ pair, subspace angle
    2*eps*dt) and then the tunneling rotation (XXplusYY, subspace angle
    2*J*dt), so the noiseless subspace action is exactly
    prod e^{-i dt J sx} e^{-i dt eps sz} with dt = t/M.
    """
    if m < 1:
        raise ValueError("need at least one Trotter step")
    return _trotter_step(params, t / m) * m


# One noisy-identity block per qubit: (XZXZZ)^2 = I up to global phase.
_BLOCK_KINDS = ("X", "Z", "X", "Z", "Z", "X", "Z", "X", "Z", "Z")


def dissipation_block(delta_q: float, t: float) -> list[Gate]:
    """round(delta_q * t) noisy-identity blocks on each of the two qubits."""
    if delta_q < 0 or t < 0:
        raise ValueError("delta_q and t must be nonnegative")
    n_blocks = math.floor(delta_q * t + 0.5)  # round half up
    block = [Gate(kind, (q,)) for q in (0, 1) for kind in _BLOCK_KINDS]
    return block * n_blocks


def _single_qubit_unitary(gate: Gate, noise: NoiseConfig) -> np.ndarray:
    if gate.kind == "X":
        u = SIGMA_X
        if noise.overrotation_x != 0.0:
            th = noise.overrotation_x
            rx = math.cos(th / 2) * IDENTITY_2 - 1j * math.sin(th / 2) * SIGMA_X
            u = rx @ u
        return u
    if gate.kind == "Z":
        return SIGMA_Z
    if gate.kind == "RX":
        th = gate.theta
        return math.cos(th / 2) * IDENTITY_2 - 1j * math.sin(th / 2) * SIGMA_X
    if gate.kind == "RZ":
        th = gate.theta
        return np.diag([np.exp(-1j * th / 2), np.exp(+1j * th / 2)])
    raise ValueError(f"not a single-qubit gate kind: {gate.kind!r}")


def gate_unitary(gate: Gate, noise: NoiseConfig = NOISELESS) -> np.ndarray:
    """4x4 unitary of the (possibly over-rotated) physical gate."""
    if gate.kind == "XXplusYY":
        th = gate.theta
        u = np.eye(4, dtype=complex)
        c, s = math.cos(th / 2), math.sin(th / 2)
        u[IDX_S1, IDX_S1] = u[IDX_S2, IDX_S2] = c
        u[IDX_S1, IDX_S2] = u[IDX_S2, IDX_S1] = -1j * s
        return u
    u1 = _single_qubit_unitary(gate, noise)
    (q,) = gate.targets
    return np.kron(u1, IDENTITY_2) if q == 0 else np.kron(IDENTITY_2, u1)


def _pauli_on(q: int, p: np.ndarray) -> np.ndarray:
    return np.kron(p, IDENTITY_2) if q == 0 else np.kron(IDENTITY_2, p)


def depolarize(rho: np.ndarray, q: int, p: float) -> np.ndarray:
    """Single-qubit depolarizing channel (p/3 per Pauli) on qubit q."""
    if p == 0.0:
        return rho
    out = (1.0 - p) * rho
    for pauli in _PAULIS:
        op = _pauli_on(q, pauli)
        out = out + (p / 3.0) * (op @ rho @ op.conj().T)
    return out


def apply_channel(rho: np.ndarray, gate: Gate, noise: NoiseConfig) -> np.ndarray:
    """Ideal gate unitary followed by depolarizing noise on touched qubits."""
    u = gate_unitary(gate, noise)
    out = u @ rho @ u.conj().T
    p = noise.depol_2q if len(gate.targets) == 2 else noise.depol_1q
    for q in gate.targets:
        out = depolarize(out, q, p)
    return out


def run_circuit(rho: np.ndarray, gates: list[Gate], noise: NoiseConfig) -> np.ndarray:
    """Apply a gate sequence with per-gate noise to a 4x4 density matrix."""
    for gate in gates:
        rho = apply_channel(rho, gate, noise)
    return rho


# ---------------------------------------------------------------------------
# Superoperator fast path (column-major vectorization, 16x16 matrices).
# ---------------------------------------------------------------------------

def _conjugation_superop(u: np.ndarray) -> np.ndarray:
    # vec(U rho U^dag) = kron(conj(U), U) vec(rho), column-major
    return np.kron(u.conj(), u)


def gate_superop(gate: Gate, noise: NoiseConfig) -> np.ndarray:
    """16x16 superoperator of one noisy gate application."""
    s = _conjugation_superop(gate_unitary(gate, noise))
    p = noise.depol_2q if len(gate.targets) == 2 else noise.depol_1q
    if p != 0.0:
        for q in gate.targets:
            dep = (1.0 - p) * np.eye(16, dtype=complex)
            for pauli in _PAULIS:
                dep = dep + (p / 3.0) * _conjugation_superop(_pauli_on(q, pauli))
            s = dep @ s
    return s


def sequence_superop(gates: list[Gate], noise: NoiseConfig) -> np.ndarray:
    s = np.eye(16, dtype=complex)
    for gate in gates:
        s = gate_superop(gate, noise) @ s
    return s


def extract_subspace_rho(rho: np.ndarray) -> np.ndarray:
    """Project onto span{|10>, |01>} (ordered s1, s2) and renormalize."""
    sub = np.array(
        [[rho[IDX_S1, IDX_S1], rho[IDX_S1, IDX_S2]],
         [rho[IDX_S2, IDX_S1], rho[IDX_S2, IDX_S2]]], dtype=complex)
    weight = np.trace(sub).real
    if weight < 1e-9:
        raise DegenerateStateError(f"subspace weight {weight} below threshold")
    return sub / weight


def embed_subspace_rho(rho2: np.ndarray) -> np.ndarray:
    """Embed a site-basis 2x2 state into the two-qubit subspace."""
    rho = np.zeros((4, 4), dtype=complex)
    rho[IDX_S1, IDX_S1] = rho2[0, 0]
    rho[IDX_S1, IDX_S2] = rho2[0, 1]
    rho[IDX_S2, IDX_S1] = rho2[1, 0]
    rho[IDX_S2, IDX_S2] = rho2[1, 1]
    return rho


DEFAULT_SHOTS = 8192


def run_dynamics(params: SystemParams, delta_q: float, schedule: TrotterSchedule,
                 noise: NoiseConfig, t_grid, *, shots: int | None = None,
                 seed: int | None = None,
                 initial_rho: np.ndarray | None = None) -> PopulationTrace:
    """Simulate the full circuit (dissipation then propagator) per grid time.

    Exact mode (``shots=None``) reads populations from the final density
    matrix and records the renormalized subspace state; shot mode draws
    ``shots`` measurement samples with readout bit flips applied.

    ``initial_rho`` is a site-basis 2x2 state embedded into the
    single-excitation subspace; default |s1><s1|.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.size == 0:
        raise ValueError("time grid must be nonempty")
    if np.any(t_grid < 0) or np.any(np.diff(t_grid) <= 0):
        raise ValueError("time grid must be nonnegative and increasing")

    if initial_rho is None:
        initial_rho = np.diag([1.0, 0.0]).astype(complex)
    rho0_vec = embed_subspace_rho(initial_rho).reshape(16, order="F")

    block_super = sequence_superop(
        [Gate(kind, (q,)) for q in (0, 1) for kind in _BLOCK_KINDS], noise)

    rng = np.random.default_rng(seed) if shots is not None else None
    r = noise.readout_flip
    flip = np.array([[1.0 - r, r], [r, 1.0 - r]])
    confusion = np.kron(flip, flip)  # outcome index = 2*b0 + b1

    p1_list, p2_list, rho_series = [], [], []
    for t in t_grid:
        n_blocks = math.floor(delta_q * t + 0.5)
        m = trotter_steps(schedule, t)
        step_super = sequence_superop(_trotter_step(params, t / m), noise)
        circuit = np.linalg.matrix_power(step_super, m) \
            @ np.linalg.matrix_power(block_super, n_blocks)
        rho = (circuit @ rho0_vec).reshape(4, 4, order="F")
        rho = 0.5 * (rho + rho.conj().T)
        if shots is None:
            p1_list.append(rho[IDX_S1, IDX_S1].real)
            p2_list.append(rho[IDX_S2, IDX_S2].real)
            rho_series.append(extract_subspace_rho(rho))
        else:
            probs = np.clip(np.diag(rho).real, 0.0, None)
            probs = confusion @ (probs / probs.sum())
            counts = rng.multinomial(shots, probs / probs.sum())
            p1_list.append(counts[IDX_S1] / shots)
            p2_list.append(counts[IDX_S2] / shots)

    return PopulationTrace(
        times=t_grid, p1=np.array(p1_list), p2=np.array(p2_list),
        rho_series=rho_series if shots is None else None, seed=seed,
        meta={"delta_q": delta_q, "shots": shots})


def _trotter_step(params: SystemParams, dt: float) -> list[Gate]:
    return [
        Gate("RZ", (0,), -params.epsilon * dt),
        Gate("RZ", (1,), +params.epsilon * dt),
        Gate("XXplusYY", (0, 1), 2.0 * params.j_coupling * dt),
    ]


_SCAN_SEQUENCES = {
    "XX": ("X", "X"),
    "XZXZ": ("X", "Z", "X", "Z"),
    "XZXZZsq": ("X", "Z", "X", "Z", "Z", "X", "Z", "X", "Z", "Z"),
}


def identity_gate_scan(kind: str, reps: int, init: tuple[float, float],
                       noise: NoiseConfig) -> np.ndarray:
    """Single-qubit identity-sequence scan; Bloch vector after each rep.

    ``init`` is the Bloch (theta, phi) of the initial pure state.  Returns
    an array of shape (reps, 3).
    """
    if reps < 0:
        raise ValueError("reps must be nonnegative")
    try:
        kinds = _SCAN_SEQUENCES[kind]
    except KeyError:
        raise ValueError(f"unknown scan kind {kind!r}") from None
    theta, phi = init
    psi = np.array([math.cos(theta / 2),
                    np.exp(1j * phi) * math.sin(theta / 2)], dtype=complex)
    rho = np.outer(psi, psi.conj())

    out = np.empty((reps, 3))
    for r in range(reps):
        for k in kinds:
            u = _single_qubit_unitary(Gate(k, (0,)), noise)
            rho = u @ rho @ u.conj().T
            p = noise.depol_1q
            if p != 0.0:
                acc = (1.0 - p) * rho
                for pauli in _PAULIS:
                    acc = acc + (p / 3.0) * (pauli @ rho @ pauli.conj().T)
                rho = acc
        out[r] = [np.trace(rho @ SIGMA_X).real,
                  np.trace(rho @ SIGMA_Y).real,
                  np.trace(rho @ SIGMA_Z).real]
    return out
