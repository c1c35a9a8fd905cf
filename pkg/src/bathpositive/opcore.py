"""Dense operator algebra on small Hilbert spaces.

Operators are plain complex ``numpy`` arrays of shape ``(d, d)``. Density
operators are the same arrays with the usual Hermiticity/positivity/trace
contracts, checked by :func:`check_density`.

Superoperators elsewhere in the package use column stacking:
``vec(A X B) = (B^T kron A) vec(X)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

STRUCT_TOL = 1e-10
PHYS_TOL = 1e-8

SIGMA_0 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = {"0": SIGMA_0, "x": SIGMA_X, "y": SIGMA_Y, "z": SIGMA_Z}


class DimensionError(ValueError):
    """Operator dimensions do not match what an operation requires."""


class DegenerateInputError(ValueError):
    """An input leaves nothing to work with (e.g. a zero operator after clipping)."""


class NotDensityError(ValueError):
    """An operator violates the density-operator contract."""


def as_operator(x) -> np.ndarray:
    a = np.asarray(x, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("operator has non-finite entries")
    return a


def dag(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def is_hermitian(a: np.ndarray, tol: float = STRUCT_TOL) -> bool:
    return bool(np.max(np.abs(a - dag(a)), initial=0.0) <= tol)


def check_density(rho, tol: float = STRUCT_TOL) -> np.ndarray:
    """Return ``rho`` as an array, raising :class:`NotDensityError` if it is not a state."""
    rho = as_operator(rho)
    if not is_hermitian(rho, tol):
        raise NotDensityError("operator is not Hermitian")
    tr = np.trace(rho).real
    if abs(tr - 1.0) > tol:
        raise NotDensityError(f"trace is {tr}, expected 1")
    lo = np.linalg.eigvalsh(0.5 * (rho + dag(rho)))[0]
    if lo < -tol:
        raise NotDensityError(f"negative eigenvalue {lo}")
    return rho


def ket(*amplitudes) -> np.ndarray:
    v = np.asarray(amplitudes, dtype=complex).ravel()
    return v / np.linalg.norm(v)


def projector(v) -> np.ndarray:
    v = np.asarray(v, dtype=complex).ravel()
    v = v / np.linalg.norm(v)
    return np.outer(v, v.conj())


def tensor_product(*ops) -> np.ndarray:
    out = np.asarray(ops[0], dtype=complex)
    for op in ops[1:]:
        out = np.kron(out, np.asarray(op, dtype=complex))
    return out


def embed(op: np.ndarray, site: int, dims: Sequence[int]) -> np.ndarray:
    """Place ``op`` on tensor factor ``site`` with identities elsewhere."""
    factors = [np.eye(d, dtype=complex) for d in dims]
    factors[site] = np.asarray(op, dtype=complex)
    return tensor_product(*factors)


def partial_trace(x, dims: tuple[int, int], keep: str = "system") -> np.ndarray:
    """Trace out one factor of a bipartite operator.

    ``dims`` is ``(d_S, d_B)``; ``keep`` is ``"system"`` (trace the bath) or
    ``"bath"`` (trace the system).
    """
    x = as_operator(x)
    d_s, d_b = dims
    if x.shape[0] != d_s * d_b:
        raise DimensionError(f"operator of dim {x.shape[0]} does not factor as {d_s}x{d_b}")
    t = x.reshape(d_s, d_b, d_s, d_b)
    if keep == "system":
        return np.einsum("ibjb->ij", t)
    if keep == "bath":
        return np.einsum("aiaj->ij", t)
    raise ValueError(f"keep must be 'system' or 'bath', got {keep!r}")


def hermitian_basis(d: int) -> list[np.ndarray]:
    """Orthonormal Hermitian basis: ``1/sqrt(d)`` followed by generalized Gell-Mann matrices.

    All elements satisfy ``Tr[G_j G_k] = delta_jk``. For ``d = 2`` this is the
    normalized Pauli set in the order identity, x, y, z.
    """
    if d < 2:
        raise ValueError("hermitian_basis needs d >= 2")
    basis = [np.eye(d, dtype=complex) / np.sqrt(d)]
    sym, anti = [], []
    for j in range(d):
        for k in range(j + 1, d):
            s = np.zeros((d, d), dtype=complex)
            s[j, k] = s[k, j] = 1 / np.sqrt(2)
            sym.append(s)
            a = np.zeros((d, d), dtype=complex)
            a[j, k] = -1j / np.sqrt(2)
            a[k, j] = 1j / np.sqrt(2)
            anti.append(a)
    diag = []
    for l in range(1, d):
        g = np.zeros((d, d), dtype=complex)
        g[np.arange(l), np.arange(l)] = 1
        g[l, l] = -l
        diag.append(g / np.sqrt(l * (l + 1)))
    if d == 2:
        return basis + sym + anti + diag
    return basis + sym + anti + diag


def expm_hermitian(h: np.ndarray, t: float) -> np.ndarray:
    """``exp(-i h t)`` for Hermitian ``h`` via eigendecomposition."""
    evals, evecs = np.linalg.eigh(0.5 * (h + dag(h)))
    return (evecs * np.exp(-1j * evals * t)) @ dag(evecs)


@dataclass(frozen=True)
class PiecewiseHamiltonian:
    """Piecewise-constant Hamiltonian starting at ``start``.

    ``segments`` is a sequence of ``(duration, H)``; durations are positive
    and each ``H`` is Hermitian (hbar = 1).
    """

    segments: tuple
    start: float = 0.0

    def __post_init__(self):
        segs = []
        for duration, h in self.segments:
            h = as_operator(h)
            if duration <= 0:
                raise ValueError("segment durations must be positive")
            if not is_hermitian(h):
                raise ValueError("segment Hamiltonian is not Hermitian")
            segs.append((float(duration), h))
        if not segs:
            raise ValueError("at least one segment is required")
        dims = {h.shape[0] for _, h in segs}
        if len(dims) != 1:
            raise DimensionError("segments act on different dimensions")
        object.__setattr__(self, "segments", tuple(segs))

    @classmethod
    def constant(cls, h, duration: float, start: float = 0.0) -> "PiecewiseHamiltonian":
        return cls(((duration, h),), start)

    @property
    def dim(self) -> int:
        return self.segments[0][1].shape[0]

    @property
    def total(self) -> float:
        return sum(d for d, _ in self.segments)

    @property
    def end(self) -> float:
        return self.start + self.total

    def propagator(self, t0: float, t1: float) -> np.ndarray:
        """Forward propagator from absolute time ``t0`` to ``t1 >= t0``."""
        eps = 1e-12 * max(1.0, abs(self.total))
        if t1 < t0 - eps:
            raise ValueError("propagator needs t1 >= t0")
        if t0 < self.start - eps or t1 > self.end + eps:
            raise ValueError(f"interval [{t0}, {t1}] outside [{self.start}, {self.end}]")
        u = np.eye(self.dim, dtype=complex)
        a = self.start
        for duration, h in self.segments:
            b = a + duration
            lo, hi = max(a, t0), min(b, t1)
            if hi > lo:
                u = expm_hermitian(h, hi - lo) @ u
            a = b
        return u


def evolve_piecewise(h: PiecewiseHamiltonian, t: float) -> np.ndarray:
    """Propagator over the first ``|t|`` time units of ``h``.

    For ``t >= 0`` this is the time-ordered ``U(t)``; for ``t < 0`` it is
    ``U(|t|)^dagger``, so ``U(t) U(-t) = 1``.
    """
    total = h.total
    if abs(t) > total * (1 + 1e-12):
        raise ValueError(f"|t| = {abs(t)} exceeds total duration {total}")
    u = h.propagator(h.start, h.start + min(abs(t), total))
    return u if t >= 0 else dag(u)


def closest_psd(x) -> np.ndarray:
    """Nearest PSD matrix (Frobenius) to the Hermitian part of ``x``, trace-normalised.

    Eigenvalues below zero are clipped; this is the plain cone projection,
    not the trace-constrained variant.
    """
    x = as_operator(x)
    herm = 0.5 * (x + dag(x))
    evals, evecs = np.linalg.eigh(herm)
    clipped = np.clip(evals, 0.0, None)
    if clipped.sum() <= 0:
        raise DegenerateInputError("no positive eigenvalues to keep")
    out = (evecs * clipped) @ dag(evecs)
    out = out / np.trace(out).real
    return 0.5 * (out + dag(out))


def fidelity(rho, sigma) -> float:
    """Uhlmann fidelity ``(Tr sqrt(sqrt(rho) sigma sqrt(rho)))**2``.

    The computation is restricted to the support of whichever argument has
    lower numerical rank (eigenvalues above ``1e-14`` times the largest), so
    round-off in the null space is never square-rooted.
    """
    rho, sigma = as_operator(rho), as_operator(sigma)
    if rho.shape != sigma.shape:
        raise DimensionError("fidelity needs operators of equal dimension")
    spectra = []
    for a in (rho, sigma):
        evals, evecs = np.linalg.eigh(0.5 * (a + dag(a)))
        keep = evals > 1e-14 * max(evals[-1], 0.0)
        spectra.append((int(keep.sum()), evals[keep], evecs[:, keep]))
    (k_a, lam, vec), other = (spectra[0], sigma) if spectra[0][0] <= spectra[1][0] else (spectra[1], rho)
    if k_a == 0:
        return 0.0
    r = np.sqrt(lam)
    inner = (r[:, None] * (dag(vec) @ other @ vec)) * r[None, :]
    evals = np.linalg.eigvalsh(0.5 * (inner + dag(inner)))
    f = float(np.sum(np.sqrt(np.clip(evals, 0.0, None))) ** 2)
    return min(max(f, 0.0), 1.0)


def rank_of_span(ops: Sequence[np.ndarray], tol: float = 1e-10) -> int:
    """Numerical rank of a set of operators (singular values above ``tol * s_max``)."""
    if len(ops) == 0:
        raise ValueError("rank_of_span needs at least one operator")
    shapes = {np.shape(o) for o in ops}
    if len(shapes) != 1:
        raise DimensionError("operators have different shapes")
    mat = np.array([np.asarray(o, dtype=complex).ravel() for o in ops])
    s = np.linalg.svd(mat, compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.sum(s > tol * s[0]))


def random_density(d: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Random density operator from a Ginibre matrix (full rank by default)."""
    k = d if rank is None else rank
    g = rng.normal(size=(d, k)) + 1j * rng.normal(size=(d, k))
    rho = g @ dag(g)
    return rho / np.trace(rho).real


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR of a complex Ginibre matrix."""
    z = (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def random_hermitian(d: int, rng: np.random.Generator) -> np.ndarray:
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return 0.5 * (a + dag(a))
