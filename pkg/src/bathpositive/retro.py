"""Retrodiction: backward maps for known Hamiltonians and stationary-noise extrapolation.

With the joint Hamiltonian known on ``[T_0, 0]`` each bath state ``rho_alpha``
induces a backward map through ``U = V^dag`` where ``V`` propagates from
``T_-`` to ``0``. For classical stationary noise, correlators sampled on
``[0, T]`` determine those on ``[-T, 0]`` because they depend only on time
differences.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bplus import BPlusDecomposition
from .dynmaps import induced_maps
from .opcore import PiecewiseHamiltonian, as_operator, dag


class ExtrapolationRangeError(ValueError):
    """Requested time tuple spans more than the sampled window."""


class InsufficientTrajectoriesError(RuntimeError):
    """Monte Carlo error estimate exceeds the requested bound."""


# ----------------------------------------------------------- backward maps

def backward_propagator(H: PiecewiseHamiltonian, T_minus: float) -> np.ndarray:
    """``U(T_-) = V^dag`` with ``V`` the forward propagator from ``T_-`` to ``0``.

    ``H`` must start at or before ``T_-`` and extend to ``0``.
    """
    if T_minus > 0 or T_minus < H.start - 1e-12 or H.end < -1e-12:
        raise ValueError(f"T_- = {T_minus} outside the Hamiltonian interval [{H.start}, 0]")
    return dag(H.propagator(T_minus, 0.0))


def backward_maps(decomp: BPlusDecomposition, H: PiecewiseHamiltonian, T_minus: float) -> list:
    """Per-label maps ``X -> Tr_B[U (X (x) rho_alpha) U^dag]`` with ``U = U(T_-)``."""
    return induced_maps(decomp, backward_propagator(H, T_minus))


def retrodict_state(rho, H: PiecewiseHamiltonian, T_minus: float) -> np.ndarray:
    """Joint state at ``T_-`` from the joint state at time 0."""
    u = backward_propagator(H, T_minus)
    return u @ as_operator(rho) @ dag(u)


# ---------------------------------------------------------- correlators

@dataclass
class CorrelatorTable:
    """Order-``k`` correlators ``values[i1, .., ik] = <B(t_i1) ... B(t_ik)>`` on a uniform grid."""

    order: int
    times: np.ndarray
    values: np.ndarray
    labels: tuple = ("B",)
    stderr: np.ndarray | float | None = None
    stationary_consistent: bool | None = None
    max_shift_spread: float | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values)
        if self.values.shape != (len(self.times),) * self.order:
            raise ValueError("values must have shape (n,) * order")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("correlator values must be finite")
        steps = np.diff(self.times)
        if len(steps) and np.ptp(steps) > 1e-9 * max(1.0, abs(steps[0])):
            raise ValueError("correlator grid must be uniform")

    @property
    def step(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def span(self) -> float:
        return float(self.times[-1] - self.times[0])


def _stderr_at(table: CorrelatorTable, idx: tuple) -> float:
    if table.stderr is None:
        return 0.0
    if np.isscalar(table.stderr):
        return float(table.stderr)
    return float(np.asarray(table.stderr)[idx])


def extrapolate_value(table: CorrelatorTable, times: Sequence[float]) -> tuple[float, float]:
    """Correlator at arbitrary grid-aligned times by shifting into the sampled window.

    Returns ``(mean over admissible shifts, spread of the shifted values)``.
    """
    n = len(table.times)
    h = table.step
    t0 = table.times[0]
    rel = np.round((np.asarray(times, dtype=float) - t0) / h).astype(int)
    if np.max(np.abs(rel * h + t0 - np.asarray(times))) > 1e-6 * h:
        raise ValueError("times are not aligned with the table grid")
    spread = rel.max() - rel.min()
    if spread > n - 1:
        raise ExtrapolationRangeError(f"time tuple spans {spread * h} > sampled window {table.span}")
    lo = -rel.min()
    hi = n - 1 - rel.max()
    vals = np.array([table.values[tuple(rel + s)] for s in range(lo, hi + 1)])
    return complex(vals.mean()) if np.iscomplexobj(vals) else float(vals.mean()), float(np.ptp(vals.real) + np.ptp(vals.imag))


def stationary_extrapolate(table: CorrelatorTable, z: float = 5.0) -> CorrelatorTable:
    """Mirror a table on ``[0, T]`` to ``[-T, 0]`` using time-shift invariance.

    Each negative-time tuple is shifted by every admissible multiple of the
    grid step into ``[0, T]`` and the shifted values are averaged. The
    returned table is flagged ``stationary_consistent = False`` if the shifted
    values disagree by more than ``z`` standard errors (or ``1e-8`` without
    error bars), which identifies non-stationary input.
    """
    n = len(table.times)
    k = table.order
    out = np.zeros_like(table.values, dtype=table.values.dtype)
    worst = 0.0
    ok = True
    for idx in itertools.product(range(n), repeat=k):
        rel = np.array(idx) - (n - 1)
        lo = -rel.min()
        hi = n - 1 - rel.max()
        vals = np.array([table.values[tuple(rel + s)] for s in range(lo, hi + 1)])
        out[idx] = vals.mean()
        spread = float(np.max(np.abs(vals - vals.mean())))
        worst = max(worst, spread)
        se = max(_stderr_at(table, tuple(rel + s)) for s in range(lo, hi + 1))
        if spread > max(z * se, 1e-8):
            ok = False
    times = table.times - table.times[-1]
    return CorrelatorTable(k, times, out, table.labels, table.stderr, ok, worst)


def pair_correlator_table(samples: np.ndarray, times: np.ndarray) -> CorrelatorTable:
    """Second-order table ``<B(t_i) B(t_j)>`` with standard errors from trajectory samples ``[N, n]``."""
    samples = np.asarray(samples, dtype=float)
    N = samples.shape[0]
    mean = samples.T @ samples / N
    sq = (samples ** 2).T @ (samples ** 2) / N
    stderr = np.sqrt(np.clip(sq - mean ** 2, 0, None) / N)
    return CorrelatorTable(2, times, mean, ("B", "B"), stderr)


def fast_pair_extrapolate(table: CorrelatorTable, z: float = 5.0) -> CorrelatorTable:
    """Vectorised :func:`stationary_extrapolate` for order-2 tables.

    For order 2 the admissible shifts of ``(i, j)`` on the mirrored grid are
    the diagonals of the sampled table, so each output entry is a diagonal mean.
    """
    if table.order != 2:
        raise ValueError("fast path needs an order-2 table")
    v = table.values
    n = v.shape[0]
    se = np.zeros_like(v, dtype=float) if table.stderr is None else np.broadcast_to(table.stderr, v.shape)
    out = np.zeros_like(v)
    ok = True
    worst = 0.0
    for off in range(-(n - 1), n):
        diag = np.diagonal(v, offset=off)
        m = diag.mean()
        spread = float(np.max(np.abs(diag - m)))
        worst = max(worst, spread)
        if spread > max(z * float(np.max(np.diagonal(se, offset=off))), 1e-8):
            ok = False
        # entries (i, j) with j - i = off on the mirrored grid
        i = np.arange(max(0, -off), min(n, n - off))
        out[i, i + off] = m
    times = table.times - table.times[-1]
    return CorrelatorTable(2, times, out, table.labels, table.stderr, ok, worst)


# --------------------------------------------------------------- OU noise

@dataclass(frozen=True)
class StationaryNoiseModel:
    """Ornstein-Uhlenbeck field ``B(t)`` with rate ``gamma`` and variance ``s2``, coupled as ``B sigma_z / 2``."""

    gamma: float
    s2: float
    axis: str = "z"

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.s2 < 0:
            raise ValueError("variance must be non-negative")

    def autocovariance(self, tau):
        return self.s2 * np.exp(-self.gamma * np.abs(tau))

    def decay_exponent(self, tau: float) -> float:
        """``(1/2) int_0^tau int_0^tau s2 exp(-gamma |u - v|) du dv``."""
        g, tau = self.gamma, abs(tau)
        return 0.5 * self.s2 * 2 * (g * tau - 1 + np.exp(-g * tau)) / g ** 2

    def coherence_factor(self, tau: float) -> float:
        return float(np.exp(-self.decay_exponent(tau)))


def simulate_ou(model: StationaryNoiseModel, times: np.ndarray, n_traj: int, rng: np.random.Generator) -> np.ndarray:
    """Exact OU trajectories on a grid, started in the stationary distribution. Shape ``[n_traj, n]``."""
    times = np.asarray(times, dtype=float)
    s = np.sqrt(model.s2)
    out = np.empty((n_traj, len(times)))
    out[:, 0] = s * rng.standard_normal(n_traj)
    for k in range(1, len(times)):
        a = np.exp(-model.gamma * (times[k] - times[k - 1]))
        out[:, k] = a * out[:, k - 1] + s * np.sqrt(1 - a * a) * rng.standard_normal(n_traj)
    return out


def _trapezoid_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = h / 2
    return w


@dataclass
class RetrodictionResult:
    retrodicted: float
    truth: float
    relative_error: float
    mc_truth: float
    mc_error_estimate: float
    table: CorrelatorTable = field(repr=False)


def _coherence(rho_s0) -> complex:
    arr = np.asarray(rho_s0)
    if arr.ndim == 0:
        return complex(arr)
    if arr.shape != (2, 2):
        raise ValueError("rho_S(0) must be a qubit density matrix")
    return complex(arr[0, 1])


def classical_retrodiction_demo(
    model: StationaryNoiseModel,
    rho_s0,
    T: float,
    trajectories: int,
    T_minus: float,
    dt: float = 0.02,
    seed: int = 0,
    max_rel_error: float = 0.05,
) -> RetrodictionResult:
    """Retrodict the coherence magnitude at ``T_-`` under OU dephasing.

    1. Simulate ``B(t)`` on ``[0, T]`` and tabulate ``<B(t_i) B(t_j)>``.
    2. Extrapolate the table to ``[-T, 0]`` by stationarity.
    3. Integrate it over ``[T_-, 0]^2`` (trapezoid) to get the decay exponent
       ``chi``; the retrodicted magnitude is ``|c(0)| exp(chi)``.

    The closed-form truth uses the exact OU double integral; an independent
    Monte Carlo truth averages ``exp(-i int B)`` over fresh trajectories on
    ``[T_-, 0]``.

    :param rho_s0: qubit state at time 0, or just its coherence ``<0|rho|1>``.
    :raises ValueError: if no qubit state at ``T_-`` can evolve into ``rho_s0``
        (the retrodicted coherence would exceed 1/2).
    """
    if T_minus > 0 or -T_minus > T:
        raise ValueError("need -T <= T_- <= 0")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    n = int(round(T / dt)) + 1
    times = np.linspace(0.0, T, n)
    h = times[1] - times[0]
    c0 = abs(_coherence(rho_s0))
    if c0 / model.coherence_factor(-T_minus) > 0.5 + 1e-12:
        raise ValueError("no physical qubit state at T_- evolves into the given state")
    if model.s2 == 0:
        table = CorrelatorTable(2, times, np.zeros((n, n)), ("B", "B"), 0.0)
        ext = fast_pair_extrapolate(table)
        return RetrodictionResult(c0, c0, 0.0, c0, 0.0, ext)
    samples = simulate_ou(model, times, trajectories, rng)
    table = pair_correlator_table(samples, times)
    ext = fast_pair_extrapolate(table)
    m = int(round(-T_minus / h)) + 1
    sel = slice(n - m, n)
    w = _trapezoid_weights(m, h)
    block = ext.values[sel, sel]
    chi = 0.5 * float(w @ block @ w)
    retro = c0 * np.exp(chi)
    # Monte Carlo error estimate from per-trajectory squared phase integrals
    phase = samples[:, :m] @ w
    x = phase ** 2
    rel_err = 0.5 * float(x.std(ddof=1) / np.sqrt(trajectories))
    if rel_err > max_rel_error:
        raise InsufficientTrajectoriesError(f"estimated relative error {rel_err:.3g} > {max_rel_error}")
    truth = c0 / model.coherence_factor(-T_minus)
    rng2 = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    back_times = np.linspace(T_minus, 0.0, m)
    back = simulate_ou(model, back_times, trajectories, rng2)
    d_mc = float(np.abs(np.mean(np.exp(-1j * (back @ w)))))
    mc_truth = c0 / d_mc
    return RetrodictionResult(retro, truth, abs(retro - truth) / truth, mc_truth, rel_err, ext)


def coherence_curve(table: CorrelatorTable, coherence0: complex, taus: Sequence[float]) -> np.ndarray:
    """Retrodicted ``|coherence(-tau)|`` from an extrapolated order-2 table on ``[-T, 0]``."""
    if table.order != 2:
        raise ValueError("coherence curve needs an order-2 table")
    n = len(table.times)
    h = table.step
    out = []
    for tau in taus:
        m = int(round(tau / h)) + 1
        if m > n:
            raise ExtrapolationRangeError(f"tau = {tau} beyond the table window {table.span}")
        w = _trapezoid_weights(m, h) if m > 1 else np.zeros(1)
        block = np.real(table.values[n - m:, n - m:])
        out.append(abs(coherence0) * np.exp(0.5 * float(w @ block @ w)))
    return np.array(out)
