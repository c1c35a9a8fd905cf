"""Per-component dynamical maps of a B+ decomposition.

Each bath state ``rho_alpha`` induces a CPTP map
``phi_alpha(X) = Tr_B[U (X (x) rho_alpha) U^dagger]`` and the reduced state is
``rho_S(t) = sum_alpha w_alpha phi_alpha(Q_alpha)``. Local operations applied
before the evolution only reshuffle coefficients through
``R[alpha, alpha'] = Tr[R(Q_alpha) P_alpha']``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bplus import BPlusDecomposition, ZeroProbabilityError, expansion_matrix
from .opcore import (
    DimensionError,
    PiecewiseHamiltonian,
    as_operator,
    dag,
    evolve_piecewise,
    partial_trace,
)
from .superop import (
    CptpReport,
    LocalOperation,
    SuperOperator,
    choi_matrix,
    random_cp,
    random_cptp,
    validate_cptp,
)

__all__ = [
    "SuperOperator",
    "LocalOperation",
    "CptpReport",
    "DynamicalMapSet",
    "ProcessTensorResult",
    "TomographyResult",
    "choi_matrix",
    "validate_cptp",
    "random_cp",
    "random_cptp",
    "induced_map",
    "induced_maps",
    "build_mapset",
    "evolve_correlated",
    "evolve_after_operation",
    "superchannel_eval",
    "process_tensor_eval",
    "map_tomography",
]


def _check_unitary(u: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    u = as_operator(u)
    if np.max(np.abs(dag(u) @ u - np.eye(u.shape[0]))) > tol:
        raise ValueError("operator is not unitary")
    return u


def induced_map(u, rho_b, d_s: int | None = None) -> SuperOperator:
    """Superoperator of ``X -> Tr_B[U (X (x) rho_b) U^dagger]``."""
    u = _check_unitary(u)
    rho_b = as_operator(rho_b)
    d_b = rho_b.shape[0]
    if d_s is None:
        d_s = u.shape[0] // d_b
    if d_s * d_b != u.shape[0]:
        raise DimensionError("unitary does not act on d_S * d_B")
    u4 = u.reshape(d_s, d_b, d_s, d_b)
    s4 = np.einsum("ibjc,ce,kble->ikjl", u4, rho_b, u4.conj())
    # s4[i, l, j, k] maps X_jk to out_il; reorder for column stacking.
    return SuperOperator(s4.transpose(1, 0, 3, 2).reshape(d_s * d_s, d_s * d_s))


def induced_maps(decomp: BPlusDecomposition, u) -> list[SuperOperator | None]:
    """One map per frame label; ``None`` where the bath state is absent."""
    d_s = decomp.dims[0]
    return [None if r is None else induced_map(u, r, d_s) for r in decomp.bath_states]


@dataclass
class DynamicalMapSet:
    """Maps ``phi_alpha`` on an explicit time grid.

    ``maps[k][alpha]`` is the map for ``times[k]`` (``None`` for absent labels).
    """

    times: np.ndarray
    maps: list
    decomp: BPlusDecomposition

    def at(self, k: int) -> list:
        return self.maps[k]

    def system_state(self, k: int) -> np.ndarray:
        return _combine(self.decomp, self.maps[k])

    def all_cptp(self, tol: float = 1e-10) -> bool:
        return all(validate_cptp(m, tol).passed for row in self.maps for m in row if m is not None)


def build_mapset(decomp: BPlusDecomposition, hamiltonian: PiecewiseHamiltonian, times) -> DynamicalMapSet:
    times = np.asarray(times, dtype=float)
    maps = [induced_maps(decomp, evolve_piecewise(hamiltonian, t)) for t in times]
    return DynamicalMapSet(times, maps, decomp)


def _combine(decomp: BPlusDecomposition, maps, R: np.ndarray | None = None) -> np.ndarray:
    d_s = decomp.dims[0]
    out = np.zeros((d_s, d_s), dtype=complex)
    Q = decomp.dual.elements
    for a in decomp.present:
        if R is None:
            out += decomp.weights[a] * maps[a](Q[a])
        else:
            arg = sum(R[a, b] * Q[b] for b in range(decomp.n))
            out += decomp.weights[a] * maps[a](arg)
    return out


def _resolve_maps(decomp: BPlusDecomposition, maps_or_u):
    if isinstance(maps_or_u, (list, tuple)):
        if len(maps_or_u) != decomp.n:
            raise DimensionError("need one map per frame label")
        return list(maps_or_u)
    return induced_maps(decomp, maps_or_u)


def evolve_correlated(decomp: BPlusDecomposition, maps_or_u) -> np.ndarray:
    """``sum_alpha w_alpha phi_alpha(Q_alpha)``.

    ``maps_or_u`` is either a joint unitary or an already-built per-label map list.
    """
    maps = _resolve_maps(decomp, maps_or_u)
    out = _combine(decomp, maps)
    return 0.5 * (out + dag(out))


def evolve_after_operation(decomp: BPlusDecomposition, maps_or_u, op: LocalOperation, tol: float = 1e-12):
    """Evolved system state after a local operation on the initial correlated state.

    Returns ``(p_R, rho)`` with
    ``rho = sum w_alpha R[alpha, alpha'] phi_alpha(Q_alpha') / p_R``.
    """
    maps = _resolve_maps(decomp, maps_or_u)
    R = expansion_matrix(decomp, op)
    p_r = float(sum(decomp.weights[a] * np.trace(op(decomp.dual.elements[a])).real for a in decomp.present))
    if p_r <= tol:
        raise ZeroProbabilityError(f"operation probability {p_r:.3e}")
    out = _combine(decomp, maps, R) / p_r
    return p_r, 0.5 * (out + dag(out))


def superchannel_eval(decomp: BPlusDecomposition, maps_or_u, op: LocalOperation) -> np.ndarray:
    """Image of a trace-preserving local operation under the superchannel."""
    if not op.trace_preserving:
        raise ValueError("superchannel input must be trace preserving")
    maps = _resolve_maps(decomp, maps_or_u)
    out = _combine(decomp, maps, expansion_matrix(decomp, op))
    return 0.5 * (out + dag(out))


@dataclass
class ProcessTensorResult:
    state: np.ndarray
    coefficients: list = field(repr=False)
    bath_operators: list = field(repr=False)


def process_tensor_eval(decomp: BPlusDecomposition, interventions: Sequence[tuple]) -> ProcessTensorResult:
    """Alternate local operations and joint unitaries on a correlated state.

    Each intervention is ``(R_i, U_i)``: ``R_i`` acts on the system, then
    ``U_i`` evolves system and bath. Bath operators attached to each dual
    label are refreshed after every step via
    ``B'_gamma = sum_beta Tr_S[(P_gamma (x) 1) U (Q_beta (x) B_beta) U^dagger]``.

    ``coefficients[i][beta, gamma, beta']`` holds
    ``f = Tr[P_gamma phi_i^(beta)(Q_beta')]`` for the maps induced by the
    normalised bath operators entering step ``i`` (zero for empty labels).
    """
    d_s, d_b = decomp.dims
    P = decomp.frame.elements
    Q = decomp.dual.elements
    n = decomp.n
    bath = decomp.bath_operators()
    coeffs = []
    for op, u in interventions:
        u = _check_unitary(u)
        if u.shape[0] != d_s * d_b:
            raise DimensionError("intervention unitary has the wrong dimension")
        if op is not None:
            R = expansion_matrix(decomp, op)
            bath = [sum(R[a, b] * bath[a] for a in range(n)) for b in range(n)]
        f = np.zeros((n, n, n))
        for b, ob in enumerate(bath):
            tr = np.trace(ob).real
            if abs(tr) > 1e-12:
                phi = induced_map(u, ob / tr, d_s)
                for bp in range(n):
                    img = phi(Q[bp])
                    f[b, :, bp] = [np.trace(p @ img).real for p in P]
        coeffs.append(f)
        new = [np.zeros((d_b, d_b), dtype=complex) for _ in range(n)]
        for b, ob in enumerate(bath):
            if not np.any(ob):
                continue
            joint = np.kron(Q[b], ob)
            evolved = u @ joint @ dag(u)
            t = evolved.reshape(d_s, d_b, d_s, d_b)
            for g in range(n):
                new[g] += np.einsum("ji,ikjl->kl", P[g], t)
        bath = new
    state = sum(np.trace(bath[g]) * Q[g] for g in range(n))
    state = 0.5 * (state + dag(state))
    return ProcessTensorResult(state, coeffs, bath)


@dataclass
class TomographyResult:
    """Recovered maps (``None`` where unrecoverable) and design diagnostics."""

    maps: list
    unrecoverable: list
    rank: int
    condition_number: float
    residual: float


def map_tomography(
    decomp: BPlusDecomposition,
    operations: Sequence[LocalOperation],
    evolved_states: Sequence[np.ndarray],
    probabilities: Sequence[float] | None = None,
    tol: float = 1e-12,
) -> TomographyResult:
    """Recover ``phi_alpha`` at one time from states evolved after known operations.

    The data for operation ``j`` are ``p_j rho_j`` with
    ``Tr[p_j rho_j P_beta] = sum R^j[alpha, alpha'] F_alpha[alpha', beta]`` and
    ``F_alpha[alpha', beta] = w_alpha Tr[phi_alpha(Q_alpha') P_beta]``.
    The ``n^2`` unknowns per ``beta`` need operations whose expansion matrices
    span all ``n^2`` directions; trace-preserving maps alone span only
    ``d^4 - d^2 + 1`` of them, so trace-decreasing operations must be included.

    :param probabilities: success probabilities ``p_j`` (default 1 for each).
    :raises ValueError: when the design matrix is rank deficient.
    """
    n = decomp.n
    d_s = decomp.dims[0]
    if n != d_s * d_s:
        raise ValueError("map tomography needs a frame with exactly d^2 elements")
    if len(operations) != len(evolved_states):
        raise ValueError("one evolved state per operation is required")
    if probabilities is None:
        probabilities = np.ones(len(operations))
    A = np.array([expansion_matrix(decomp, op).ravel() for op in operations])
    s = np.linalg.svd(A, compute_uv=False)
    rank = int(np.sum(s > 1e-10 * s[0]))
    if rank < n * n:
        raise ValueError(f"design matrix has rank {rank} < {n * n}")
    cond = float(s[0] / s[-1])
    P = decomp.frame.elements
    Q = decomp.dual.elements
    obs = np.array(
        [[p * np.trace(as_operator(rho) @ pb).real for pb in P] for p, rho in zip(probabilities, evolved_states)]
    )
    sol, *_ = np.linalg.lstsq(A, obs, rcond=None)
    residual = float(np.max(np.abs(A @ sol - obs)))
    F = sol.reshape(n, n, n)  # [alpha, alpha', beta]
    maps, bad = [], []
    for a in range(n):
        w = decomp.weights[a]
        if abs(w) < tol or decomp.bath_states[a] is None:
            maps.append(None)
            bad.append(a)
            continue
        images = [sum(F[a, ap, b] * Q[b] for b in range(n)) / w for ap in range(n)]

        def fn(x, images=images):
            return sum(np.trace(x @ P[ap]) * images[ap] for ap in range(n))

        maps.append(SuperOperator.from_function(fn, d_s))
    return TomographyResult(maps, bad, rank, cond, residual)
