"""Post-processing of measured population traces.

Pipeline order: leakage renormalization -> zero-time normalization ->
damped-oscillation fit -> equilibrium correction.  A separate step infers
the off-diagonals of the site-basis density matrix from the populations
and the fitted decay/frequency, via the eigenbasis of the Hamiltonian.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import curve_fit
from scipy.signal import find_peaks

from .circuit import PopulationTrace
from .qdyn import SystemParams, build_hamiltonian, eigenbasis


class DegeneratePointError(ValueError):
    """A grid point has negligible subspace weight; carries its index."""

    def __init__(self, message: str, index: int):
        super().__init__(message)
        self.index = index


class NormalizationError(ValueError):
    pass


class FitFailureError(RuntimeError):
    """Damped-oscillation fit did not converge or is unidentifiable."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class DecayFit:
    """Fitted p1(t) ~ baseline + amplitude * exp(-alpha t) cos(omega t + phase)."""

    alpha: float
    omega: float
    amplitude: float
    phase: float
    baseline: float
    residual_rms: float = 0.0

    def __post_init__(self):
        if self.alpha < 0 or self.omega < 0:
            raise ValueError("alpha and omega must be nonnegative")
        if not 0.0 <= self.baseline <= 1.0:
            raise ValueError("baseline must be in [0, 1]")

    def evaluate(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return (self.baseline + self.amplitude * np.exp(-self.alpha * t)
                * np.cos(self.omega * t + self.phase))


def leak_renormalize(trace: PopulationTrace) -> PopulationTrace:
    """Divide out the leaked |00>/|11> weight: p_i <- p_i / (p1 + p2)."""
    total = trace.p1 + trace.p2
    bad = np.nonzero(total < 1e-9)[0]
    if bad.size:
        raise DegeneratePointError(
            f"subspace weight {total[bad[0]]} below threshold at index {bad[0]}",
            int(bad[0]))
    return replace(trace, p1=trace.p1 / total, p2=trace.p2 / total)


def zero_time_normalize(trace: PopulationTrace) -> PopulationTrace:
    """Divide p1 by its first-grid-point value; clip results to [0, 1]."""
    first = trace.p1[0]
    if first < 1e-6:
        raise NormalizationError(f"p1 at the first grid point is {first}")
    p1 = trace.p1 / first
    clipped = int(np.count_nonzero((p1 < 0) | (p1 > 1)))
    p1 = np.clip(p1, 0.0, 1.0)
    meta = dict(trace.meta)
    meta["zero_time_clip_count"] = clipped
    return replace(trace, p1=p1, p2=1.0 - p1, meta=meta)


def _model(t, alpha, omega, amplitude, phase, baseline):
    return baseline + amplitude * np.exp(-alpha * t) * np.cos(omega * t + phase)


def _omega_guess(times: np.ndarray, values: np.ndarray) -> float:
    dt = times[1] - times[0]
    spectrum = np.abs(np.fft.rfft(values - values.mean()))
    freqs = np.fft.rfftfreq(values.size, d=dt)
    if spectrum.size <= 1:
        return 1.0
    peak = 1 + int(np.argmax(spectrum[1:]))
    return max(2.0 * np.pi * freqs[peak], 1e-3)


def _alpha_guess(times: np.ndarray, values: np.ndarray, baseline: float) -> float:
    env = np.abs(values - baseline)
    peaks, _ = find_peaks(env)
    if peaks.size >= 2 and np.all(env[peaks] > 0):
        slope = np.polyfit(times[peaks], np.log(env[peaks]), 1)[0]
        return max(-slope, 0.0)
    span = times[-1] - times[0]
    return 1.0 / span if span > 0 else 0.0


def fit_damped_oscillation(trace: PopulationTrace) -> DecayFit:
    """Nonlinear least squares of p1(t) to a damped cosine with baseline.

    Initial guesses: omega from the discrete-spectrum peak, alpha from a
    log-envelope line fit, baseline from the trailing 20% mean; a few
    restarts around the omega guess guard against local minima.
    """
    times, values = trace.times, trace.p1
    if times.size < 8:
        raise FitFailureError(f"need at least 8 points, got {times.size}")
    if np.ptp(values) < 1e-9:
        raise FitFailureError("constant trace: alpha and omega unidentifiable",
                              {"ptp": float(np.ptp(values))})

    tail = values[-max(1, values.size // 5):]
    baseline0 = float(np.clip(tail.mean(), 0.0, 1.0))
    omega0 = _omega_guess(times, values)
    alpha0 = _alpha_guess(times, values, baseline0)
    amp0 = float(values[0] - baseline0) or float(np.ptp(values)) / 2

    bounds = ([0.0, 0.0, -2.0, -np.pi, 0.0],
              [np.inf, np.inf, 2.0, np.pi, 1.0])
    span = times[-1] - times[0]
    alpha_tries = {alpha0, 0.0, 1.0 / span if span > 0 else 1.0}
    best, best_cost = None, np.inf
    failures = []
    for omega_try in (omega0, 0.5 * omega0, 2.0 * omega0):
        for alpha_try in sorted(alpha_tries):
            p0 = [alpha_try, omega_try, amp0, 0.0, baseline0]
            try:
                popt, _ = curve_fit(_model, times, values, p0=p0,
                                    bounds=bounds, maxfev=20000)
            except (RuntimeError, ValueError) as exc:
                failures.append(str(exc))
                continue
            resid = _model(times, *popt) - values
            cost = float(np.sqrt(np.mean(resid ** 2)))
            if cost < best_cost:
                best, best_cost = popt, cost
    if best is None:
        raise FitFailureError("all fit restarts failed", {"errors": failures})
    alpha, omega, amplitude, phase, baseline = best
    return DecayFit(alpha=float(alpha), omega=float(omega),
                    amplitude=float(amplitude), phase=float(phase),
                    baseline=float(baseline), residual_rms=best_cost)


def equilibrium_correct(trace: PopulationTrace, alpha: float,
                        q: float) -> PopulationTrace:
    """Pull the trace to the target equilibrium:
    p1 <- exp(-alpha t) p1 + (1 - exp(-alpha t)) q."""
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must be a probability")
    decay = np.exp(-alpha * trace.times)
    p1 = decay * trace.p1 + (1.0 - decay) * q
    return replace(trace, p1=p1, p2=1.0 - p1)


def reconstruct_offdiagonals(trace: PopulationTrace, fit: DecayFit,
                             params: SystemParams) -> list[np.ndarray]:
    """Infer site-basis density matrices from populations and the fit.

    Per grid point: transform diag(p1, p2) to the eigenbasis, attach the
    coherence sqrt(p1_E p2_E) e^{i omega t} e^{-alpha t} (lower-left entry),
    and transform back.  The coherence magnitude never exceeds the purity
    bound, so outputs are positive by construction; any residual negative
    eigenvalue is clipped and flagged in ``trace.meta``.
    """
    if np.abs(trace.p1 + trace.p2 - 1.0).max() > 1e-8:
        raise ValueError("trace must be normalized (p1 + p2 = 1)")
    u = eigenbasis(build_hamiltonian(params))
    states = []
    clip_flags = 0
    for t, p1, p2 in zip(trace.times, trace.p1, trace.p2):
        diag_site = np.diag([p1, p2]).astype(complex)
        rho_e = u.conj().T @ diag_site @ u
        p1e, p2e = rho_e[0, 0].real, rho_e[1, 1].real
        coh = np.sqrt(max(p1e * p2e, 0.0)) * np.exp(1j * fit.omega * t) \
            * np.exp(-fit.alpha * t)
        rho_e = np.array([[p1e, np.conj(coh)], [coh, p2e]], dtype=complex)
        rho_s = u @ rho_e @ u.conj().T
        evals, vecs = np.linalg.eigh(rho_s)
        if evals.min() < -1e-6:
            clip_flags += 1
            evals = np.clip(evals, 0.0, None)
            rho_s = (vecs * evals) @ vecs.conj().T
            rho_s = rho_s / np.trace(rho_s).real
        states.append(rho_s)
    if clip_flags:
        trace.meta["offdiagonal_clip_count"] = clip_flags
    return states
