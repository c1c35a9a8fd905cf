"""Exact pure dephasing of a qubit coupled linearly to bosonic modes.

Hamiltonian (hbar = 1)::

    H = eps/2 sigma_z + sum_j w_j b_j^dag b_j + sum_j g_j sigma_z (b_j + b_j^dag)

Populations are conserved. In the frame rotating at ``eps`` the coherence of
each B+ component is multiplied by the characteristic function of its bath
state evaluated at ``xi_j(t) = 2 g_j (1 - exp(i w_j t)) / w_j``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .opcore import SIGMA_Z, as_operator, dag, expm_hermitian, partial_trace

DEFAULT_CUTOFF = 30
TRUNCATION_TOL = 1e-6


class TruncationError(ValueError):
    """Fock truncation leaves too much population at the top level."""


@dataclass(frozen=True)
class DephasingSpec:
    """Qubit gap ``eps`` and bath modes ``(omega_j, g_j)``."""

    eps: float
    modes: tuple

    def __post_init__(self):
        modes = tuple((float(w), float(g)) for w, g in self.modes)
        if any(w <= 0 for w, _ in modes):
            raise ValueError("mode frequencies must be positive")
        object.__setattr__(self, "modes", modes)

    @property
    def omegas(self) -> np.ndarray:
        return np.array([w for w, _ in self.modes])

    @property
    def couplings(self) -> np.ndarray:
        return np.array([g for _, g in self.modes])


@dataclass(frozen=True)
class GaussianBathState:
    """Displaced thermal state per mode: amplitudes ``alpha_j`` and occupancies ``nbar_j``."""

    alpha: tuple
    nbar: tuple

    def __post_init__(self):
        alpha = tuple(complex(a) for a in np.atleast_1d(self.alpha))
        nbar = tuple(float(n) for n in np.atleast_1d(self.nbar))
        if len(alpha) != len(nbar):
            raise ValueError("alpha and nbar need one entry per mode")
        if any(n < 0 for n in nbar):
            raise ValueError("nbar must be non-negative")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "nbar", nbar)


def displacement_vector(spec: DephasingSpec, t: float) -> np.ndarray:
    w, g = spec.omegas, spec.couplings
    return 2 * g * (1 - np.exp(1j * w * t)) / w


def char_fn_gaussian(state: GaussianBathState, xi) -> complex:
    """``prod_j exp(-(2 nbar_j + 1)|xi_j|^2 / 2 + xi_j conj(alpha_j) - conj(xi_j) alpha_j)``."""
    xi = np.atleast_1d(np.asarray(xi, dtype=complex))
    alpha = np.array(state.alpha)
    nbar = np.array(state.nbar)
    if xi.shape != alpha.shape:
        raise ValueError("xi has the wrong number of modes")
    expo = -(2 * nbar + 1) * np.abs(xi) ** 2 / 2 + xi * alpha.conj() - xi.conj() * alpha
    return complex(np.exp(np.sum(expo)))


# ---------------------------------------------------------------- Fock space

def annihilation(cutoff: int) -> np.ndarray:
    """Truncated annihilation operator on levels ``0..cutoff``."""
    return np.diag(np.sqrt(np.arange(1, cutoff + 1)), 1).astype(complex)


def mode_operators(n_modes: int, cutoff: int) -> list[np.ndarray]:
    a = annihilation(cutoff)
    dim = cutoff + 1
    ops = []
    for j in range(n_modes):
        op = np.eye(1, dtype=complex)
        for k in range(n_modes):
            op = np.kron(op, a if k == j else np.eye(dim))
        ops.append(op)
    return ops


def displacement_operator(xi, cutoff: int) -> np.ndarray:
    """``D(xi) = exp(sum_j xi_j b_j^dag - conj(xi_j) b_j)`` on the truncated space."""
    xi = np.atleast_1d(np.asarray(xi, dtype=complex))
    bs = mode_operators(len(xi), cutoff)
    gen = sum(x * dag(b) - np.conj(x) * b for x, b in zip(xi, bs))
    # gen is anti-Hermitian: gen = -i K with K = i gen Hermitian
    return expm_hermitian(1j * gen, 1.0)


def thermal_state(nbar: float, cutoff: int = DEFAULT_CUTOFF) -> np.ndarray:
    n = np.arange(cutoff + 1)
    if nbar == 0:
        p = (n == 0).astype(float)
    else:
        p = nbar ** n / (nbar + 1) ** (n + 1)
    p = p / p.sum()
    return np.diag(p).astype(complex)


def fock_state(k: int, cutoff: int = DEFAULT_CUTOFF) -> np.ndarray:
    rho = np.zeros((cutoff + 1, cutoff + 1), dtype=complex)
    rho[k, k] = 1.0
    return rho


def gaussian_to_truncated(state: GaussianBathState, cutoff: int = DEFAULT_CUTOFF) -> np.ndarray:
    """Truncated density matrix of a multimode displaced thermal state."""
    rho = np.eye(1, dtype=complex)
    for a, n in zip(state.alpha, state.nbar):
        d = displacement_operator([a], cutoff)
        rho = np.kron(rho, d @ thermal_state(n, cutoff) @ dag(d))
    return rho / np.trace(rho).real


def _n_modes_from_dim(dim: int, cutoff: int) -> int:
    m, size = 0, 1
    while size < dim:
        size *= cutoff + 1
        m += 1
    if size != dim:
        raise ValueError(f"dimension {dim} is not a power of {cutoff + 1}")
    return m


def check_truncation(rho, cutoff: int, tol: float = TRUNCATION_TOL) -> None:
    """Raise :class:`TruncationError` if any mode holds more than ``tol`` at level ``cutoff``."""
    rho = as_operator(rho)
    dim = cutoff + 1
    m = _n_modes_from_dim(rho.shape[0], cutoff)
    diag = np.real(np.diag(rho)).reshape((dim,) * m)
    for j in range(m):
        top = np.take(diag, dim - 1, axis=j).sum()
        if top > tol:
            raise TruncationError(f"mode {j} has population {top:.2e} at level {cutoff}")


def char_fn_numeric(rho, xi, cutoff: int = DEFAULT_CUTOFF, check: bool = True) -> complex:
    """``Tr[rho D(xi)]`` with truncated ladder operators."""
    rho = as_operator(rho)
    if check:
        check_truncation(rho, cutoff)
    return complex(np.trace(rho @ displacement_operator(xi, cutoff)))


def gaussian_match(rho, cutoff: int = DEFAULT_CUTOFF) -> GaussianBathState:
    """Displaced thermal state with the same mean amplitude and mean occupancy as ``rho``.

    Squeezing is not represented, so this is exact only for displaced thermal inputs.
    """
    rho = as_operator(rho)
    m = _n_modes_from_dim(rho.shape[0], cutoff)
    alphas, nbars = [], []
    for b in mode_operators(m, cutoff):
        a = complex(np.trace(rho @ b))
        n = float(np.trace(rho @ dag(b) @ b).real) - abs(a) ** 2
        alphas.append(a)
        nbars.append(max(n, 0.0))
    return GaussianBathState(tuple(alphas), tuple(nbars))


def bath_char_fn(bath, xi, cutoff: int = DEFAULT_CUTOFF) -> complex:
    """Characteristic function of a Gaussian or truncated bath state."""
    if isinstance(bath, GaussianBathState):
        return char_fn_gaussian(bath, xi)
    if isinstance(bath, np.ndarray):
        return char_fn_numeric(bath, xi, cutoff)
    raise TypeError(f"cannot evaluate a characteristic function for {type(bath).__name__}")


# ----------------------------------------------------------------- dynamics

def dephase_correlated(decomp, spec: DephasingSpec, t: float, cutoff: int = DEFAULT_CUTOFF) -> np.ndarray:
    """Qubit state at time ``t`` in the frame rotating at ``eps``.

    ``decomp`` supplies ``weights``, ``dual.elements`` and ``bath_states``; a
    bath entry may be a truncated density matrix, a :class:`GaussianBathState`
    or ``None`` (absent). Populations are copied from the initial state and
    ``<0|rho(t)|1> = sum_alpha w_alpha <0|Q_alpha|1> chi_alpha(xi_t)``.
    """
    Q = decomp.dual.elements
    if Q[0].shape != (2, 2):
        raise ValueError("dephasing needs a qubit system")
    xi = displacement_vector(spec, t)
    rho0 = np.zeros((2, 2), dtype=complex)
    coh = 0j
    for w, q, bath in zip(decomp.weights, Q, decomp.bath_states):
        if bath is None:
            continue
        rho0 += w * q
        coh += w * q[0, 1] * bath_char_fn(bath, xi, cutoff)
    out = np.array([[rho0[0, 0].real, coh], [np.conj(coh), rho0[1, 1].real]], dtype=complex)
    return out


def dephasing_hamiltonian(spec: DephasingSpec, cutoff: int = DEFAULT_CUTOFF) -> np.ndarray:
    bs = mode_operators(len(spec.modes), cutoff)
    dim_b = bs[0].shape[0]
    eye_b = np.eye(dim_b)
    h = 0.5 * spec.eps * np.kron(SIGMA_Z, eye_b)
    for (w, g), b in zip(spec.modes, bs):
        h = h + np.kron(np.eye(2), w * dag(b) @ b) + g * np.kron(SIGMA_Z, b + dag(b))
    return h


def dephasing_oracle(rho_sb, spec: DephasingSpec, t: float, cutoff: int = DEFAULT_CUTOFF) -> np.ndarray:
    """Brute-force evolution on qubit (x) truncated Fock space.

    The coherence is returned in the frame rotating at ``eps`` (multiplied by
    ``exp(i eps t)``) so it is directly comparable with :func:`dephase_correlated`.
    """
    rho_sb = as_operator(rho_sb)
    dim_b = rho_sb.shape[0] // 2
    check_truncation(partial_trace(rho_sb, (2, dim_b), keep="bath"), cutoff)
    h = dephasing_hamiltonian(spec, cutoff)
    u = expm_hermitian(h, t)
    rho = partial_trace(u @ rho_sb @ dag(u), (2, dim_b))
    phase = np.exp(1j * spec.eps * t)
    return np.array([[rho[0, 0], rho[0, 1] * phase], [rho[1, 0] * np.conj(phase), rho[1, 1]]])


def conditional_displacement_state(rho_s, amplitude: complex, nbar: float, cutoff: int = DEFAULT_CUTOFF) -> np.ndarray:
    """``U_c (rho_s (x) thermal) U_c^dag`` with ``U_c = |0><0| D(a) + |1><1| D(-a)`` (single mode)."""
    d_plus = displacement_operator([amplitude], cutoff)
    d_minus = displacement_operator([-amplitude], cutoff)
    p0 = np.diag([1.0, 0.0]).astype(complex)
    p1 = np.diag([0.0, 1.0]).astype(complex)
    uc = np.kron(p0, d_plus) + np.kron(p1, d_minus)
    rho = uc @ np.kron(as_operator(rho_s), thermal_state(nbar, cutoff)) @ dag(uc)
    return 0.5 * (rho + dag(rho))


def conditional_phase_state(rho_s, amplitude: complex, nbar: float, theta: float, cutoff: int = DEFAULT_CUTOFF) -> np.ndarray:
    """Displaced thermal bath, then a phase rotation ``exp(-i theta n)`` conditioned on ``|1>``."""
    d = displacement_operator([amplitude], cutoff)
    bath = d @ thermal_state(nbar, cutoff) @ dag(d)
    rot = np.diag(np.exp(-1j * theta * np.arange(cutoff + 1)))
    p0 = np.diag([1.0, 0.0]).astype(complex)
    p1 = np.diag([0.0, 1.0]).astype(complex)
    uc = np.kron(p0, np.eye(cutoff + 1)) + np.kron(p1, rot)
    rho = uc @ np.kron(as_operator(rho_s), bath) @ dag(uc)
    return 0.5 * (rho + dag(rho))
