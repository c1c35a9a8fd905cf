"""Instantaneous pulse sequences, switching functions and filter functions.

Pulses are ideal pi rotations ``-i sigma_a`` on the probe. Between pulses the
toggling-frame rotation is constant, so every switching function
``y_ab(t) = Tr[U^dag sigma_a U sigma_b] / 2`` is piecewise constant and the
first-order filter function has a closed form per segment.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .opcore import PAULIS, as_operator, dag, expm_hermitian

AXES = ("x", "y", "z")
PULSE_TIME_TOL = 1e-12


@dataclass(frozen=True)
class PulseSequence:
    """Base cycle of length ``T_c`` with pulses ``(offset, axis)``, repeated ``M`` times."""

    T_c: float
    pulses: tuple
    M: int = 1

    def __post_init__(self):
        if self.T_c <= 0:
            raise ValueError("cycle time must be positive")
        if self.M < 1:
            raise ValueError("M must be at least 1")
        pulses = tuple((float(o), str(a)) for o, a in self.pulses)
        offs = [o for o, _ in pulses]
        if any(a not in AXES for _, a in pulses):
            raise ValueError("pulse axis must be one of x, y, z")
        if any(o < 0 or o >= self.T_c for o in offs) or any(b <= a for a, b in zip(offs, offs[1:])):
            raise ValueError("pulse offsets must be strictly increasing in [0, T_c)")
        object.__setattr__(self, "pulses", pulses)

    @property
    def total(self) -> float:
        return self.M * self.T_c

    def pulse_times(self) -> list[tuple[float, str]]:
        return [(m * self.T_c + o, a) for m in range(self.M) for o, a in self.pulses]

    def with_repetitions(self, M: int) -> "PulseSequence":
        return PulseSequence(self.T_c, self.pulses, M)


def cpmg_sequence(T_c: float, M: int = 1, axis: str = "x") -> PulseSequence:
    """CPMG cycle: pi pulses at ``T_c/4`` and ``3 T_c/4``."""
    return PulseSequence(T_c, ((T_c / 4, axis), (3 * T_c / 4, axis)), M)


def free_evolution(T: float) -> PulseSequence:
    return PulseSequence(T, (), 1)


def pulse_unitary(axis: str) -> np.ndarray:
    return -1j * PAULIS[axis]


def _y_matrix(u: np.ndarray) -> np.ndarray:
    """``y[a, b] = Tr[u^dag sigma_a u sigma_b] / 2`` for a, b in x, y, z."""
    return np.array(
        [[np.trace(dag(u) @ PAULIS[a] @ u @ PAULIS[b]).real / 2 for b in AXES] for a in AXES]
    )


def switching_segments(seq: PulseSequence, T: float | None = None) -> list[tuple[float, float, np.ndarray]]:
    """Piecewise-constant switching functions as ``(t_start, t_end, y)`` on ``[0, T]``."""
    T = seq.total if T is None else T
    if T > seq.total * (1 + 1e-12):
        raise ValueError("T exceeds the sequence duration")
    u = np.eye(2, dtype=complex)
    segs = []
    t0 = 0.0
    for tp, axis in seq.pulse_times():
        if tp >= T:
            break
        if tp > t0:
            segs.append((t0, tp, _y_matrix(u)))
        u = pulse_unitary(axis) @ u
        t0 = tp
    if T > t0:
        segs.append((t0, T, _y_matrix(u)))
    return segs


def switching_functions(seq: PulseSequence, times) -> np.ndarray:
    """``y[k, a, b]`` at each time (right-continuous at pulse times)."""
    times = np.asarray(times, dtype=float)
    out = np.zeros((len(times), 3, 3))
    u = np.eye(2, dtype=complex)
    pulses = seq.pulse_times()
    for k, t in enumerate(times):
        u = np.eye(2, dtype=complex)
        for tp, axis in pulses:
            if tp <= t + PULSE_TIME_TOL:
                u = pulse_unitary(axis) @ u
        out[k] = _y_matrix(u)
    return out


@dataclass
class TogglingFrame:
    times: np.ndarray
    y: np.ndarray
    bath_operators: list


def toggling_frame(seq: PulseSequence, H_B, B_ops: Sequence[np.ndarray], times) -> TogglingFrame:
    """Switching functions and toggled bath operators ``B_a(t) = U_B^dag B_a U_B``.

    Every pulse time inside the grid span must be a grid point, otherwise the
    piecewise structure is not resolved and ``ValueError`` is raised.
    """
    times = np.asarray(times, dtype=float)
    h = as_operator(H_B)
    for tp, _ in seq.pulse_times():
        if times[0] <= tp <= times[-1] and np.min(np.abs(times - tp)) > 1e-9:
            raise ValueError(f"grid does not resolve the pulse at t = {tp}")
    y = switching_functions(seq, times)
    b_t = []
    for t in times:
        u = expm_hermitian(h, t)
        b_t.append([dag(u) @ as_operator(b) @ u for b in B_ops])
    return TogglingFrame(times, y, b_t)


def filter_first_order(seq: PulseSequence, omega: float, T: float | None = None) -> np.ndarray:
    """``F[a, b] = int_0^T y_ab(s) exp(i omega s) ds`` in closed form."""
    out = np.zeros((3, 3), dtype=complex)
    for t0, t1, y in switching_segments(seq, T):
        if omega == 0:
            out += y * (t1 - t0)
        else:
            out += y * (np.exp(1j * omega * t1) - np.exp(1j * omega * t0)) / (1j * omega)
    return out


def window_factor(omega: float, T_c: float, M: int) -> complex:
    """``(1 - exp(i M omega T_c)) / (1 - exp(i omega T_c))``, equal to ``M`` on resonance."""
    k = omega * T_c / (2 * np.pi)
    if abs(k - round(k)) < 1e-12:
        return complex(M)
    z = np.exp(1j * omega * T_c)
    return complex((1 - z ** M) / (1 - z))


@dataclass
class ResonanceSet:
    frequencies: np.ndarray
    weights: np.ndarray

    @property
    def positive(self) -> np.ndarray:
        return self.frequencies[self.frequencies > 1e-9]


def resonance_frequencies(H_B, B_ops: Sequence[np.ndarray] = (), screen: float = 1e-8, merge_tol: float = 1e-9) -> ResonanceSet:
    """Eigen-gaps ``|l_i - l_j|`` of ``H_B`` with some ``|<i|B_a|j>| > screen``.

    With no bath operators every gap (including 0) is returned. Gaps closer
    than ``merge_tol`` are merged into one frequency (their mean); the weight
    is the largest screened matrix element in the cluster.
    """
    h = as_operator(H_B)
    evals, evecs = np.linalg.eigh(0.5 * (h + dag(h)))
    n = len(evals)
    if B_ops:
        mats = [np.abs(dag(evecs) @ as_operator(b) @ evecs) for b in B_ops]
        elem = np.max(mats, axis=0)
    else:
        elem = np.ones((n, n))
    pairs = sorted(
        (abs(evals[i] - evals[j]), float(elem[i, j])) for i in range(n) for j in range(i, n) if elem[i, j] > screen
    )
    if not pairs:
        return ResonanceSet(np.array([0.0]), np.array([0.0]))
    clusters = [[pairs[0]]]
    for gap, w in pairs[1:]:
        if gap - clusters[-1][0][0] <= merge_tol:
            clusters[-1].append((gap, w))
        else:
            clusters.append([(gap, w)])
    freqs = np.array([float(np.mean([g for g, _ in c])) for c in clusters])
    freqs[np.abs(freqs) < merge_tol] = 0.0
    return ResonanceSet(freqs, np.array([max(w for _, w in c) for c in clusters]))


def sequence_unitary(seq: PulseSequence, H, T: float | None = None, probe_dims: tuple[int, int] = (2, 1)) -> np.ndarray:
    """Joint propagator of ``H`` interleaved with instantaneous probe pulses up to ``T``.

    ``probe_dims = (2, d_rest)``: pulses act on the first tensor factor.
    """
    h = as_operator(H)
    d_rest = h.shape[0] // 2
    T = seq.total if T is None else T
    u = np.eye(h.shape[0], dtype=complex)
    t0 = 0.0
    for tp, axis in seq.pulse_times():
        if tp > T:
            break
        u = expm_hermitian(h, tp - t0) @ u
        u = np.kron(pulse_unitary(axis), np.eye(d_rest)) @ u
        t0 = tp
    return expm_hermitian(h, T - t0) @ u
