"""Bath-positive decompositions ``rho_SB = sum_alpha w_alpha Q_alpha (x) rho_alpha``.

Given a frame ``{P_alpha}`` with dual ``{Q_alpha}``, the bath operators are
``w_alpha rho_alpha = Tr_S[(P_alpha (x) 1) rho_SB]`` and the weights are
``w_alpha = Tr[P_alpha rho_S]``. Since every ``P_alpha`` is positive each
``rho_alpha`` is a genuine density operator.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .frames import DualFrame, PositiveFrame, dual_frame
from .opcore import (
    STRUCT_TOL,
    DimensionError,
    as_operator,
    dag,
)
from .superop import LocalOperation

ABSENT_TOL = 1e-12


class BathNotPositiveError(ValueError):
    """A conditional bath operator has a significantly negative eigenvalue."""


class ZeroProbabilityError(ValueError):
    """A local operation succeeds with (numerically) zero probability."""


@dataclass(frozen=True)
class BPlusDecomposition:
    """Weights, dual elements and bath states of a B+ decomposition.

    ``bath_states[alpha]`` is ``None`` where ``|w_alpha|`` is below ``1e-12``.
    """

    frame: PositiveFrame
    dual: DualFrame
    weights: np.ndarray
    bath_states: tuple
    dims: tuple[int, int]

    @property
    def n(self) -> int:
        return len(self.weights)

    @property
    def present(self) -> list[int]:
        return [i for i, r in enumerate(self.bath_states) if r is not None]

    def bath_operators(self) -> list[np.ndarray]:
        """Unnormalised ``w_alpha rho_alpha`` (zero where absent)."""
        d_b = self.dims[1]
        return [
            self.weights[i] * r if r is not None else np.zeros((d_b, d_b), dtype=complex)
            for i, r in enumerate(self.bath_states)
        ]

    def system_state(self) -> np.ndarray:
        return sum(self.weights[i] * self.dual.elements[i] for i in self.present)


def _normalise_bath(b: np.ndarray, w: float, tol: float) -> np.ndarray | None:
    if abs(w) < ABSENT_TOL:
        return None
    rho = b / w
    rho = 0.5 * (rho + dag(rho))
    evals, evecs = np.linalg.eigh(rho)
    if evals[0] < -tol:
        raise BathNotPositiveError(f"bath state has eigenvalue {evals[0]:.3e}")
    if evals[0] < 0:
        rho = (evecs * np.clip(evals, 0, None)) @ dag(evecs)
        rho = rho / np.trace(rho).real
    return rho


def decompose(
    rho_sb,
    frame: PositiveFrame,
    dims: tuple[int, int],
    dual: DualFrame | None = None,
    tol: float = STRUCT_TOL,
) -> BPlusDecomposition:
    """B+ decomposition of ``rho_sb`` with respect to ``frame``.

    :param rho_sb: joint state on ``d_S * d_B``.
    :param frame: positive frame on the system.
    :param dims: ``(d_S, d_B)``.
    :param dual: dual frame; the minimal-norm dual is computed if omitted.
    :param tol: slack on negative eigenvalues of the bath states.
    """
    rho_sb = as_operator(rho_sb)
    d_s, d_b = dims
    if frame.dim != d_s:
        raise DimensionError("frame dimension differs from d_S")
    if rho_sb.shape[0] != d_s * d_b:
        raise DimensionError("state dimension differs from d_S * d_B")
    if dual is None:
        dual = dual_frame(frame)
    t = rho_sb.reshape(d_s, d_b, d_s, d_b)
    weights, baths = [], []
    for p in frame.elements:
        b = np.einsum("ji,ikjl->kl", p, t)
        w = float(np.trace(b).real)
        weights.append(w)
        baths.append(_normalise_bath(b, w, tol))
    return BPlusDecomposition(frame, dual, np.array(weights), tuple(baths), (d_s, d_b))


def reconstruct(decomp: BPlusDecomposition) -> np.ndarray:
    """``sum_alpha w_alpha Q_alpha (x) rho_alpha`` over present entries."""
    d_s, d_b = decomp.dims
    out = np.zeros((d_s * d_b, d_s * d_b), dtype=complex)
    for i in decomp.present:
        out += decomp.weights[i] * np.kron(decomp.dual.elements[i], decomp.bath_states[i])
    return out


def steered_states(decomp: BPlusDecomposition, povm: Sequence[np.ndarray], tol: float = 1e-12):
    """Bath states conditioned on each outcome of a system POVM.

    Returns a list of ``(m, p_m, rho_m)``; outcomes with ``p_m <= tol`` are omitted.
    """
    povm = [as_operator(e) for e in povm]
    d_s = decomp.dims[0]
    if np.max(np.abs(sum(povm) - np.eye(d_s))) > 1e-9:
        raise ValueError("measurement operators do not sum to the identity")
    ops = decomp.bath_operators()
    out = []
    for m, e in enumerate(povm):
        coeff = np.array([np.trace(e @ q) for q in decomp.dual.elements])
        b = sum(c * o for c, o in zip(coeff, ops))
        p = float(np.trace(b).real)
        if p <= tol:
            continue
        rho = b / p
        out.append((m, p, 0.5 * (rho + dag(rho))))
    return out


def expansion_matrix(decomp: BPlusDecomposition, op: LocalOperation) -> np.ndarray:
    """``R[alpha, alpha'] = Tr[R(Q_alpha) P_alpha']``."""
    rq = [op(q) for q in decomp.dual.elements]
    return np.array([[np.trace(r @ p).real for p in decomp.frame.elements] for r in rq])


def apply_local_operation(decomp: BPlusDecomposition, op: LocalOperation, tol: float = 1e-12):
    """Decomposition of ``(R (x) I)(rho_SB) / p_R`` in the same frame.

    Uses ``R(Q_alpha) = sum_alpha' R_{alpha alpha'} Q_alpha'`` so the new bath
    operators are ``sum_alpha R_{alpha alpha'} w_alpha rho_alpha``.

    :returns: ``(p_R, new_decomposition)``.
    """
    if op.d != decomp.dims[0]:
        raise DimensionError("operation acts on a different system dimension")
    ops = decomp.bath_operators()
    p_r = float(sum(decomp.weights[i] * np.trace(op(decomp.dual.elements[i])).real for i in decomp.present))
    if p_r <= tol:
        raise ZeroProbabilityError(f"operation probability {p_r:.3e}")
    R = expansion_matrix(decomp, op)
    weights, baths = [], []
    for k in range(decomp.n):
        b = sum(R[a, k] * ops[a] for a in range(decomp.n)) / p_r
        w = float(np.trace(b).real)
        weights.append(w)
        baths.append(_normalise_bath(b, w, 1e-8))
    return p_r, replace(decomp, weights=np.array(weights), bath_states=tuple(baths))
