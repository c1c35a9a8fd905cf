"""Superoperators on column-stacked operators and their Choi matrices.

Convention: ``vec(X)`` stacks columns (Fortran order), so
``vec(A X B) = (B^T kron A) vec(X)``. The Choi matrix is
``J = sum_ij E_ij kron Phi(E_ij)``, so ``Tr J = d`` for a trace-preserving map.
With this normalisation the qubit transpose map has Choi minimum eigenvalue
``-1`` (``-1/2`` if ``J`` is rescaled to unit trace).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .opcore import STRUCT_TOL, DimensionError, as_operator, dag


def vec(x: np.ndarray) -> np.ndarray:
    return np.asarray(x).reshape(-1, order="F")


def unvec(v: np.ndarray, d: int) -> np.ndarray:
    return np.asarray(v).reshape(d, d, order="F")


@dataclass(frozen=True)
class SuperOperator:
    """Linear map on ``d x d`` operators stored as a ``d^2 x d^2`` matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        d2 = m.shape[0]
        d = int(round(np.sqrt(d2)))
        if m.ndim != 2 or m.shape != (d2, d2) or d * d != d2:
            raise DimensionError(f"superoperator matrix has bad shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("superoperator has non-finite entries")
        object.__setattr__(self, "matrix", m)

    @property
    def d(self) -> int:
        return int(round(np.sqrt(self.matrix.shape[0])))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = as_operator(x)
        if x.shape[0] != self.d:
            raise DimensionError("operator dimension does not match map")
        return unvec(self.matrix @ vec(x), self.d)

    def compose(self, other: "SuperOperator") -> "SuperOperator":
        """``self o other`` (apply ``other`` first)."""
        return SuperOperator(self.matrix @ other.matrix)

    @classmethod
    def identity(cls, d: int) -> "SuperOperator":
        return cls(np.eye(d * d, dtype=complex))

    @classmethod
    def from_kraus(cls, kraus: Sequence[np.ndarray]) -> "SuperOperator":
        ks = [as_operator(k) for k in kraus]
        return cls(sum(np.kron(k.conj(), k) for k in ks))

    @classmethod
    def from_function(cls, fn, d: int) -> "SuperOperator":
        cols = []
        for j in range(d):
            for i in range(d):
                e = np.zeros((d, d), dtype=complex)
                e[i, j] = 1.0
                cols.append(vec(fn(e)))
        return cls(np.array(cols).T)

    @classmethod
    def unitary(cls, u: np.ndarray) -> "SuperOperator":
        return cls.from_kraus([u])

    def choi(self) -> np.ndarray:
        d = self.d
        j = np.zeros((d * d, d * d), dtype=complex)
        for a in range(d):
            for b in range(d):
                e = np.zeros((d, d), dtype=complex)
                e[a, b] = 1.0
                j += np.kron(e, self(e))
        return j


def choi_matrix(m: SuperOperator) -> np.ndarray:
    return m.choi()


@dataclass
class CptpReport:
    choi_min_eig: float
    tp_residual: float
    passed: bool

    def __bool__(self) -> bool:
        return self.passed


def validate_cptp(m: SuperOperator, tol: float = STRUCT_TOL) -> CptpReport:
    """Complete positivity via the Choi spectrum, trace preservation via ``Tr_out J = 1``."""
    d = m.d
    j = m.choi()
    herm = 0.5 * (j + dag(j))
    lo = float(np.linalg.eigvalsh(herm)[0])
    tr_out = np.einsum("aibi->ab", j.reshape(d, d, d, d))
    tp = float(np.max(np.abs(tr_out - np.eye(d))))
    herm_ok = np.max(np.abs(j - dag(j))) <= tol
    return CptpReport(lo, tp, bool(herm_ok and lo >= -tol and tp < tol))


class NotCompletelyPositiveError(ValueError):
    pass


@dataclass(frozen=True)
class LocalOperation:
    """Completely positive map on the system, possibly trace-decreasing."""

    superop: SuperOperator
    trace_preserving: bool = False

    def __post_init__(self):
        rep = validate_cptp(self.superop)
        if rep.choi_min_eig < -1e-9:
            raise NotCompletelyPositiveError(f"Choi min eigenvalue {rep.choi_min_eig}")
        if self.trace_preserving and rep.tp_residual > 1e-9:
            raise ValueError(f"map flagged trace-preserving but TP residual is {rep.tp_residual}")

    @property
    def d(self) -> int:
        return self.superop.d

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.superop(x)

    @classmethod
    def from_kraus(cls, kraus, trace_preserving: bool | None = None) -> "LocalOperation":
        s = SuperOperator.from_kraus(kraus)
        if trace_preserving is None:
            trace_preserving = validate_cptp(s).tp_residual < 1e-10
        return cls(s, trace_preserving)

    @classmethod
    def identity(cls, d: int) -> "LocalOperation":
        return cls(SuperOperator.identity(d), True)

    @classmethod
    def unitary(cls, v) -> "LocalOperation":
        return cls(SuperOperator.unitary(v), True)

    @classmethod
    def replacement(cls, tau) -> "LocalOperation":
        """``X -> tau Tr[X]``."""
        tau = as_operator(tau)
        return cls(SuperOperator.from_function(lambda x: tau * np.trace(x), tau.shape[0]), True)

    @classmethod
    def project_prepare(cls, psi_in, psi_out) -> "LocalOperation":
        """``X -> <psi_in|X|psi_in> |psi_out><psi_out|`` (trace-decreasing)."""
        a = np.asarray(psi_in, dtype=complex).ravel()
        b = np.asarray(psi_out, dtype=complex).ravel()
        a = a / np.linalg.norm(a)
        b = b / np.linalg.norm(b)
        return cls.from_kraus([np.outer(b, a.conj())], trace_preserving=False)

    def mix(self, other: "LocalOperation", lam: float) -> "LocalOperation":
        m = lam * self.superop.matrix + (1 - lam) * other.superop.matrix
        return LocalOperation(SuperOperator(m), self.trace_preserving and other.trace_preserving)


def random_cptp(d: int, rng: np.random.Generator, n_kraus: int | None = None) -> SuperOperator:
    """Random CPTP map from a random isometry (Stinespring)."""
    k = n_kraus or d
    g = rng.normal(size=(k * d, d)) + 1j * rng.normal(size=(k * d, d))
    q, _ = np.linalg.qr(g)
    return SuperOperator.from_kraus([q[i * d:(i + 1) * d] for i in range(k)])


def random_cp(d: int, rng: np.random.Generator, n_kraus: int = 2) -> SuperOperator:
    """Random trace-decreasing CP map: a random CPTP map scaled into ``(0.2, 1]``."""
    kr = [rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)) for _ in range(n_kraus)]
    s = sum(dag(k) @ k for k in kr)
    norm = np.linalg.eigvalsh(s)[-1]
    scale = rng.uniform(0.2, 1.0)
    return SuperOperator.from_kraus([k * np.sqrt(scale / norm) for k in kr])
