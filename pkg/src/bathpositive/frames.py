"""Operator frames of positive operators and their duals.

A frame here is a list of positive operators ``P_alpha`` on a ``d``-dimensional
space spanning all operators. Its dual ``Q_alpha`` satisfies the
reconstruction identity ``A = sum_alpha Tr[A P_alpha] Q_alpha``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .opcore import (
    PAULIS,
    STRUCT_TOL,
    DimensionError,
    as_operator,
    dag,
    hermitian_basis,
    rank_of_span,
)

PINV_RCOND = 1e-12


class NotAFrameError(ValueError):
    """The operators do not span the operator space."""


@dataclass(frozen=True)
class PositiveFrame:
    """Spanning set of positive operators ``P_alpha`` on a ``d``-dimensional space."""

    elements: tuple
    name: str = "frame"

    def __post_init__(self):
        els = tuple(as_operator(p) for p in self.elements)
        if not els:
            raise NotAFrameError("empty frame")
        d = els[0].shape[0]
        if any(p.shape != (d, d) for p in els):
            raise DimensionError("frame elements have different dimensions")
        for p in els:
            if np.max(np.abs(p - dag(p))) > STRUCT_TOL:
                raise ValueError("frame element is not Hermitian")
            if np.linalg.eigvalsh(p)[0] < -STRUCT_TOL:
                raise ValueError("frame element is not positive")
        if len(els) < d * d or rank_of_span(els) < d * d:
            raise NotAFrameError(f"{len(els)} elements span fewer than d^2 = {d * d} dimensions")
        object.__setattr__(self, "elements", els)

    @property
    def dim(self) -> int:
        return self.elements[0].shape[0]

    @property
    def n(self) -> int:
        return len(self.elements)

    def __len__(self) -> int:
        return self.n

    def is_povm(self, tol: float = STRUCT_TOL) -> bool:
        return bool(np.max(np.abs(sum(self.elements) - np.eye(self.dim))) <= tol)


@dataclass(frozen=True)
class TransferMatrix:
    T: np.ndarray
    gram_min: float
    gram_max: float

    @property
    def frame_bounds(self) -> tuple[float, float]:
        """Lower and upper frame bounds ``(a, b)``: extreme eigenvalues of ``T^T T``."""
        return self.gram_min, self.gram_max


@dataclass(frozen=True)
class DualFrame:
    elements: tuple
    frame: PositiveFrame
    M: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return len(self.elements)

    def __len__(self) -> int:
        return self.n


def _check_basis(frame: PositiveFrame, basis) -> list[np.ndarray]:
    if basis is None:
        basis = hermitian_basis(frame.dim)
    basis = list(basis)
    if len(basis) != frame.dim ** 2 or basis[0].shape != (frame.dim, frame.dim):
        raise DimensionError("basis does not match frame dimension")
    return basis


def transfer_matrix(frame: PositiveFrame, basis=None) -> TransferMatrix:
    """Real ``n x d^2`` matrix ``T[alpha, j] = Tr[P_alpha G_j]``.

    Raises :class:`NotAFrameError` when ``T^T T`` is singular.
    """
    basis = _check_basis(frame, basis)
    T = np.array([[np.trace(p @ g).real for g in basis] for p in frame.elements])
    gram = np.linalg.eigvalsh(T.T @ T)
    if gram[0] <= PINV_RCOND * gram[-1]:
        raise NotAFrameError(f"T^T T is singular (min eigenvalue {gram[0]:.3e})")
    return TransferMatrix(T=T, gram_min=float(gram[0]), gram_max=float(gram[-1]))


def dual_frame(frame: PositiveFrame, basis=None) -> DualFrame:
    """Minimal-norm dual: ``Q = M P`` with ``M = T (T^T T)^{-2} T^T``."""
    tm = transfer_matrix(frame, basis)
    T = tm.T
    ginv = np.linalg.pinv(T.T @ T, rcond=PINV_RCOND)
    M = T @ ginv @ ginv @ T.T
    P = np.array(frame.elements)
    Q = np.einsum("ab,bij->aij", M, P)
    Q = 0.5 * (Q + dag(Q))
    return DualFrame(elements=tuple(Q), frame=frame, M=M)


def canonicalize_povm(raw: Sequence[np.ndarray], select: Sequence[int] | None = None) -> PositiveFrame:
    """Rescale ``d^2`` linearly independent positive operators into a POVM.

    Uses ``P_alpha = P'^{-1/2} P'_alpha P'^{-1/2}`` with ``P' = sum P'_alpha``.
    ``select`` optionally picks a ``d^2`` subset of ``raw``.
    """
    ops = [as_operator(p) for p in raw]
    if select is not None:
        ops = [ops[i] for i in select]
    if not ops:
        raise ValueError("no operators given")
    d = ops[0].shape[0]
    if len(ops) != d * d:
        raise ValueError(f"need exactly d^2 = {d * d} operators, got {len(ops)}")
    for p in ops:
        if np.linalg.eigvalsh(0.5 * (p + dag(p)))[0] < -STRUCT_TOL:
            raise ValueError("raw element is not positive")
    if rank_of_span(ops) < d * d:
        raise NotAFrameError("raw elements are linearly dependent")
    total = sum(ops)
    evals, evecs = np.linalg.eigh(0.5 * (total + dag(total)))
    if evals[0] <= STRUCT_TOL:
        raise NotAFrameError("sum of raw elements is singular")
    inv_sqrt = (evecs / np.sqrt(evals)) @ dag(evecs)
    out = []
    for p in ops:
        q = inv_sqrt @ p @ inv_sqrt
        out.append(0.5 * (q + dag(q)))
    return PositiveFrame(tuple(out), name="canonical")


SIC_BLOCH = np.array(
    [
        [0.0, 0.0, 1.0],
        [2 * np.sqrt(2) / 3, 0.0, -1 / 3],
        [-np.sqrt(2) / 3, np.sqrt(2 / 3), -1 / 3],
        [-np.sqrt(2) / 3, -np.sqrt(2 / 3), -1 / 3],
    ]
)


def bloch_operator(m, scale: float = 1.0) -> np.ndarray:
    """``scale * (1 + m . sigma)``."""
    m = np.asarray(m, dtype=float)
    return scale * (PAULIS["0"] + m[0] * PAULIS["x"] + m[1] * PAULIS["y"] + m[2] * PAULIS["z"])


def qubit_sic_frame() -> PositiveFrame:
    """Tetrahedral qubit SIC-POVM ``P_alpha = (1 + m_alpha . sigma) / 4``."""
    return PositiveFrame(tuple(bloch_operator(m, 0.25) for m in SIC_BLOCH), name="sic")


def pauli_frame() -> PositiveFrame:
    """The qubit frame ``{1, 1 + sigma_x, 1 + sigma_y, 1 + sigma_z}``.

    Its dual is ``{(1 - sigma_x - sigma_y - sigma_z)/2, sigma_x/2, sigma_y/2, sigma_z/2}``.
    It is not a POVM, so the weights need not sum to one.
    """
    els = [PAULIS["0"]] + [PAULIS["0"] + PAULIS[k] for k in "xyz"]
    return PositiveFrame(tuple(els), name="pauli")


def overcomplete_pauli_frame() -> PositiveFrame:
    """Six projectors onto the +/- eigenstates of x, y, z, each divided by 3 (a POVM)."""
    els = []
    for k in "xyz":
        for s in (1, -1):
            els.append((PAULIS["0"] + s * PAULIS[k]) / 6)
    return PositiveFrame(tuple(els), name="overcomplete")


def _weyl_heisenberg(d: int) -> tuple[np.ndarray, np.ndarray]:
    shift = np.roll(np.eye(d), 1, axis=0).astype(complex)
    clock = np.diag(np.exp(2j * np.pi * np.arange(d) / d))
    return shift, clock


def qutrit_sic_frame() -> PositiveFrame:
    """Hesse SIC-POVM: Weyl-Heisenberg orbit of ``(0, 1, -1)/sqrt(2)``, elements divided by 3."""
    shift, clock = _weyl_heisenberg(3)
    fid = np.array([0, 1, -1], dtype=complex) / np.sqrt(2)
    els = []
    for a in range(3):
        for b in range(3):
            v = np.linalg.matrix_power(shift, a) @ np.linalg.matrix_power(clock, b) @ fid
            els.append(np.outer(v, v.conj()) / 3)
    return PositiveFrame(tuple(els), name="sic")


def mub_frame(d: int) -> PositiveFrame:
    """Projectors of ``d + 1`` mutually unbiased bases (odd prime ``d``), each divided by ``d + 1``.

    Bases: the computational one and ``sum_j omega^(b j^2 + k j) |j> / sqrt(d)``
    for ``b = 0..d-1``. Overcomplete with ``d(d + 1)`` elements.
    """
    if d < 3 or any(d % p == 0 for p in range(2, int(np.sqrt(d)) + 1)):
        raise ValueError("mub_frame needs an odd prime dimension")
    omega = np.exp(2j * np.pi / d)
    j = np.arange(d)
    vecs = [np.eye(d)[k].astype(complex) for k in range(d)]
    for b in range(d):
        for k in range(d):
            vecs.append(omega ** ((b * j * j + k * j) % d) / np.sqrt(d))
    return PositiveFrame(tuple(np.outer(v, v.conj()) / (d + 1) for v in vecs), name="mub")


def random_projector_frame(d: int, rng: np.random.Generator) -> PositiveFrame:
    """Canonicalised POVM built from ``d^2`` random rank-1 projectors."""
    raw = []
    for _ in range(d * d):
        v = rng.normal(size=d) + 1j * rng.normal(size=d)
        raw.append(np.outer(v, v.conj()) / np.vdot(v, v).real)
    return canonicalize_povm(raw)


def sic_dual_closed_form(frame: PositiveFrame, a: float | None = None) -> list[np.ndarray]:
    """Closed-form SIC dual ``Q = d/(a d^3 - 1) [(d^2 - 1) P - (1 - a d) 1]``.

    ``a`` is the common value of ``Tr[P_alpha^2]``; it is read from the frame when omitted.
    """
    d = frame.dim
    if a is None:
        a = float(np.trace(frame.elements[0] @ frame.elements[0]).real)
    eye = np.eye(d)
    return [d / (a * d ** 3 - 1) * ((d * d - 1) * p - (1 - a * d) * eye) for p in frame.elements]


def _is_sic(frame: PositiveFrame, tol: float = 1e-10) -> bool:
    d = frame.dim
    if frame.n != d * d or not frame.is_povm(tol):
        return False
    gram = np.array([[np.trace(p @ q).real for q in frame.elements] for p in frame.elements])
    diag = np.diag(gram)
    off = gram[~np.eye(frame.n, dtype=bool)]
    return bool(np.ptp(diag) < tol and np.ptp(off) < tol)


@dataclass
class FrameReport:
    reconstruction_residual: float
    reverse_reconstruction_residual: float
    biorthogonality_residual: float | None
    frame_bounds: tuple[float, float]
    dual_unit_trace: bool | None
    sic_closed_form_residual: float | None

    def ok(self, tol: float = 1e-10) -> bool:
        checks = [self.reconstruction_residual < tol, self.reverse_reconstruction_residual < tol]
        if self.biorthogonality_residual is not None:
            checks.append(self.biorthogonality_residual < tol)
        if self.dual_unit_trace is not None:
            checks.append(self.dual_unit_trace)
        if self.sic_closed_form_residual is not None:
            checks.append(self.sic_closed_form_residual < tol)
        return all(checks)


def validate_frame(frame: PositiveFrame, dual, n_random: int = 20, seed: int = 0) -> FrameReport:
    """Report-only checks of a (frame, dual) pair.

    ``dual`` may be a :class:`DualFrame` or a plain list of operators, so a
    perturbed dual can be checked too.
    """
    Q = np.array(dual.elements if isinstance(dual, DualFrame) else [as_operator(q) for q in dual])
    P = np.array(frame.elements)
    d = frame.dim
    rng = np.random.default_rng(seed)
    res = rev = 0.0
    for _ in range(n_random):
        a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        a = a + dag(a)
        coeff = np.einsum("ij,aji->a", a, P)
        res = max(res, float(np.max(np.abs(np.einsum("a,aij->ij", coeff, Q) - a))))
        coeff = np.einsum("ij,aji->a", a, Q)
        rev = max(rev, float(np.max(np.abs(np.einsum("a,aij->ij", coeff, P) - a))))
    bi = None
    unit = None
    if frame.n == d * d:
        gram = np.einsum("aij,bji->ab", P, Q)
        bi = float(np.max(np.abs(gram - np.eye(frame.n))))
        if frame.is_povm():
            unit = bool(np.allclose(np.einsum("aii->a", Q).real, 1.0, atol=1e-10))
    sic = None
    if _is_sic(frame):
        closed = np.array(sic_dual_closed_form(frame))
        sic = float(np.max(np.abs(closed - Q)))
    tm = transfer_matrix(frame)
    return FrameReport(res, rev, bi, tm.frame_bounds, unit, sic)
