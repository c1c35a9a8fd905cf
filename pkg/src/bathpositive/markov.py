"""Computational-Markovianity checks relative to a B+ decomposition.

A correlated system-bath state is computationally Markovian if some B+
decomposition exists whose per-label maps ``phi_alpha`` all satisfy a chosen
Markov criterion. Two criteria ship: CP-divisibility on a time grid and
invariance of the maps under dynamical decoupling. :func:`frame_search` is a
heuristic search over candidate frames; failing to find one is not a proof
that none exists.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .bplus import BPlusDecomposition, ZeroProbabilityError, decompose, reconstruct
from .control import PulseSequence, sequence_unitary, switching_segments
from .dynmaps import induced_maps
from .frames import DualFrame, NotAFrameError, PositiveFrame, canonicalize_povm, dual_frame
from .opcore import PiecewiseHamiltonian, as_operator, dag, evolve_piecewise, expm_hermitian, random_unitary
from .retro import StationaryNoiseModel
from .superop import LocalOperation, SuperOperator

CHOI_TOL = 1e-8
PINV_CUTOFF = 1e-10
DD_TOL = 1e-8
NEAR_INVARIANT_TOL = 1e-3
WEIGHT_TOL = 1e-12

MARKOVIAN = "markovian"
NON_MARKOVIAN = "non-markovian"
INDETERMINATE = "indeterminate"


# ---------------------------------------------------------------- divisibility

@dataclass
class DivisibilityResult:
    """Verdict for one map grid and the most negative intermediate Choi eigenvalue.

    ``worst_pair`` is the index ``k`` of the pair ``(t_k, t_{k+1})`` holding
    that eigenvalue (``None`` without pairs).
    """

    verdict: str
    min_eig: float
    worst_pair: int | None
    singular_pairs: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.verdict == MARKOVIAN


def _choi_stack(m: np.ndarray) -> np.ndarray:
    """Choi matrices of a stack of column-stacking superoperator matrices ``[..., d^2, d^2]``."""
    d = int(round(np.sqrt(m.shape[-1])))
    s4 = m.reshape(m.shape[:-2] + (d, d, d, d))
    # J[(a, i), (b, j)] = S[i + j d, a + b d]
    return np.moveaxis(s4, (-1, -3, -2, -4), (-4, -3, -2, -1)).reshape(m.shape[:-2] + (d * d, d * d))


def cp_divisibility(maps: Sequence, tol: float = CHOI_TOL, cutoff: float = PINV_CUTOFF) -> DivisibilityResult:
    """Test ``Phi_{t_{k+1}, t_k} = phi_{t_{k+1}} phi_{t_k}^+`` for positivity on consecutive pairs.

    A pair whose earlier map has ``sigma_min < cutoff * sigma_max`` cannot be
    inverted reliably and is marked singular. One negative pair makes the
    verdict non-Markovian. Without a negative pair, any singular pair makes it
    indeterminate.

    :param maps: superoperators (or their matrices) on an increasing time grid.
    """
    mats = np.array([m.matrix if isinstance(m, SuperOperator) else np.asarray(m) for m in maps])
    if len(mats) < 2:
        return DivisibilityResult(MARKOVIAN, 0.0, None, [])
    early, late = mats[:-1], mats[1:]
    s = np.linalg.svd(early, compute_uv=False)
    ok = (s[:, 0] > 0) & (s[:, -1] >= cutoff * s[:, 0])
    singular = [int(k) for k in np.flatnonzero(~ok)]
    if not np.any(ok):
        return DivisibilityResult(INDETERMINATE, 0.0, None, singular)
    idx = np.flatnonzero(ok)
    inter = late[idx] @ np.linalg.pinv(early[idx], rcond=cutoff)
    j = _choi_stack(inter)
    eig = np.linalg.eigvalsh(0.5 * (j + np.conj(np.swapaxes(j, -1, -2))))[:, 0]
    k = int(np.argmin(eig))
    worst, worst_k = float(eig[k]), int(idx[k])
    if worst < -tol:
        verdict = NON_MARKOVIAN
    elif singular:
        verdict = INDETERMINATE
    else:
        verdict = MARKOVIAN
    return DivisibilityResult(verdict, worst, worst_k, singular)


def coherence_map(factor: complex) -> SuperOperator:
    """Qubit map multiplying ``<0|X|1>`` by ``factor`` and keeping populations."""
    m = np.eye(4, dtype=complex)
    m[2, 2] = factor  # vec index of X[0, 1] under column stacking
    m[1, 1] = np.conj(factor)
    return SuperOperator(m)


# -------------------------------------------------------------------- DD

@dataclass
class DDReport:
    """Outcome of the decoupling-invariance criterion.

    ``residual`` is the largest spectral-norm difference between maps with and
    without the sequence. ``frame_check_residual`` repeats the test in a
    random second frame.
    """

    invariant: bool
    residual: float
    per_alpha: list
    per_sequence: list
    frame_check_invariant: bool | None
    frame_check_residual: float | None
    tol: float = DD_TOL

    @property
    def near_invariant(self) -> bool:
        return self.residual < NEAR_INVARIANT_TOL


def _hamiltonian_matrix(H) -> np.ndarray:
    if isinstance(H, PiecewiseHamiltonian):
        return H.constant()
    return as_operator(H)


def _dd_residuals(decomp: BPlusDecomposition, h: np.ndarray, menu: Sequence[PulseSequence]) -> np.ndarray:
    """``res[s, alpha]`` for each sequence and present label (NaN where absent)."""
    out = np.full((len(menu), decomp.n), np.nan)
    for s, seq in enumerate(menu):
        free = induced_maps(decomp, expm_hermitian(h, seq.total))
        dd = induced_maps(decomp, sequence_unitary(seq, h))
        for a in decomp.present:
            out[s, a] = np.linalg.norm(free[a].matrix - dd[a].matrix, 2)
    return out


def dd_invariance(
    decomp: BPlusDecomposition,
    H,
    menu: Sequence[PulseSequence],
    tol: float = DD_TOL,
    frame_check: bool = True,
    seed: int = 0,
) -> DDReport:
    """Compare per-label maps at the end of each sequence with free evolution.

    The maps are invariant when every difference is below ``tol``. With
    ``frame_check`` the state is re-decomposed in a randomly rotated SIC frame
    and the test is repeated; the verdict should not change.
    """
    h = _hamiltonian_matrix(H)
    if not menu:
        raise ValueError("sequence menu is empty")
    res = _dd_residuals(decomp, h, menu)
    residual = float(np.nanmax(res)) if np.any(np.isfinite(res)) else 0.0
    per_alpha = [float(np.nanmax(res[:, a])) if decomp.bath_states[a] is not None else None for a in range(decomp.n)]
    per_seq = [float(np.nanmax(r)) for r in res]
    fc_inv = fc_res = None
    if frame_check:
        frame2 = rotated_frame(decomp.frame, np.random.default_rng(np.random.SeedSequence([seed, 7])))
        d2 = decompose(reconstruct(decomp), frame2, decomp.dims)
        res2 = _dd_residuals(d2, h, menu)
        fc_res = float(np.nanmax(res2)) if np.any(np.isfinite(res2)) else 0.0
        fc_inv = fc_res < tol
    return DDReport(residual < tol, residual, per_alpha, per_seq, fc_inv, fc_res, tol)


def rotated_frame(frame: PositiveFrame, rng: np.random.Generator) -> PositiveFrame:
    """Frame ``{V P_alpha V^dag}`` for a random unitary ``V``."""
    v = random_unitary(frame.dim, rng)
    return PositiveFrame(tuple(v @ p @ dag(v) for p in frame.elements), name=f"{frame.name}-rotated")


def _segment_overlap(gamma: float, a0: float, a1: float, b0: float, b1: float) -> float:
    """``int_{a0}^{a1} int_{b0}^{b1} exp(-gamma |u - v|) dv du`` for ``a1 <= b0`` or equal segments."""
    if a0 == b0 and a1 == b1:
        L = a1 - a0
        return 2 * (gamma * L - 1 + np.exp(-gamma * L)) / gamma ** 2
    g = gamma
    return (np.exp(-g * (b0 - a1)) - np.exp(-g * (b0 - a0)) - np.exp(-g * (b1 - a1)) + np.exp(-g * (b1 - a0))) / g ** 2


def ou_coherence_factor(model: StationaryNoiseModel, seq: PulseSequence | None, T: float) -> float:
    """Coherence factor under OU noise ``B sigma_z / 2`` with the switching sign of ``seq``.

    Exponent ``(1/2) s2 sum_ij y_i y_j int_i int_j exp(-gamma |u - v|)`` over
    piecewise-constant segments of the ``z``-``z`` switching function.
    """
    if seq is None:
        segs = [(0.0, T, 1.0)]
    else:
        segs = [(t0, t1, float(y[2, 2])) for t0, t1, y in switching_segments(seq, T)]
    total = 0.0
    for i, (a0, a1, yi) in enumerate(segs):
        total += yi * yi * _segment_overlap(model.gamma, a0, a1, a0, a1)
        for b0, b1, yj in segs[i + 1:]:
            total += 2 * yi * yj * _segment_overlap(model.gamma, a0, a1, b0, b1)
    return float(np.exp(-0.5 * model.s2 * total))


def ou_dd_residual(model: StationaryNoiseModel, seq: PulseSequence) -> float:
    """Spectral-norm difference of the OU dephasing maps with and without ``seq``."""
    free = coherence_map(ou_coherence_factor(model, None, seq.total))
    dd = coherence_map(ou_coherence_factor(model, seq, seq.total))
    return float(np.linalg.norm(free.matrix - dd.matrix, 2))


# ------------------------------------------------------------- report

@dataclass
class MarkovReport:
    """Per-label verdicts for one decomposition and one criterion."""

    criterion: str
    verdicts: dict
    min_eigs: dict
    worst_min_eig: float
    overall: bool
    offending: list
    details: dict = field(default_factory=dict, repr=False)


def map_grids(decomp: BPlusDecomposition, H, times) -> list:
    """``grids[alpha][k]`` = ``phi_alpha`` at ``times[k]`` (``None`` for absent labels)."""
    times = np.asarray(times, dtype=float)
    if isinstance(H, PiecewiseHamiltonian):
        us = [evolve_piecewise(H, t) for t in times]
    else:
        h = as_operator(H)
        us = [expm_hermitian(h, t) for t in times]
    per_time = [induced_maps(decomp, u) for u in us]
    return [None if decomp.bath_states[a] is None else [row[a] for row in per_time] for a in range(decomp.n)]


def comp_markov_check(
    decomp: BPlusDecomposition,
    H=None,
    criterion: str = "divisibility",
    times=None,
    maps: Sequence | None = None,
    menu: Sequence[PulseSequence] = (),
    tol: float | None = None,
) -> MarkovReport:
    """Apply a criterion to every label with ``w_alpha > 1e-12``; overall verdict is the conjunction.

    For ``"divisibility"`` pass either ``maps`` (per-label grids) or ``H`` and
    ``times``. For ``"dd"`` pass ``H`` and a sequence ``menu``.
    """
    labels = [a for a in decomp.present if abs(decomp.weights[a]) > WEIGHT_TOL]
    verdicts, mins, details = {}, {}, {}
    if criterion == "divisibility":
        if maps is None:
            if H is None or times is None:
                raise ValueError("divisibility needs maps or (H, times)")
            maps = map_grids(decomp, H, times)
        tol = CHOI_TOL if tol is None else tol
        for a in labels:
            r = cp_divisibility(maps[a], tol)
            verdicts[a] = r.verdict
            mins[a] = r.min_eig
            details[a] = r
    elif criterion == "dd":
        if H is None:
            raise ValueError("dd criterion needs H")
        tol = DD_TOL if tol is None else tol
        rep = dd_invariance(decomp, H, menu, tol, frame_check=False)
        for a in labels:
            verdicts[a] = MARKOVIAN if rep.per_alpha[a] < tol else NON_MARKOVIAN
            mins[a] = -rep.per_alpha[a]
        details["dd"] = rep
    else:
        raise ValueError(f"unknown criterion {criterion!r}")
    offending = [a for a in labels if verdicts[a] != MARKOVIAN]
    worst = min(mins.values()) if mins else 0.0
    return MarkovReport(criterion, verdicts, mins, float(worst), not offending, offending, details)


def transported_decomposition(decomp: BPlusDecomposition, op: LocalOperation) -> tuple[float, BPlusDecomposition]:
    """``(R (x) I)(rho_SB) / p_R`` written with the same bath states and ``Q_alpha -> R(Q_alpha) / p_R``."""
    Q = decomp.dual.elements
    p_r = float(sum(decomp.weights[a] * np.trace(op(Q[a])).real for a in decomp.present))
    if p_r <= WEIGHT_TOL:
        raise ZeroProbabilityError(f"operation probability {p_r:.3e}")
    new_q = tuple(op(q) / p_r for q in Q)
    dual = DualFrame(new_q, decomp.frame, decomp.dual.M)
    return p_r, BPlusDecomposition(decomp.frame, dual, decomp.weights, decomp.bath_states, decomp.dims)


# ------------------------------------------------------------ frame search

@dataclass(frozen=True)
class SearchConfig:
    """Random restarts of a Nelder-Mead refinement; ``budget`` caps criterion evaluations."""

    restarts: int = 64
    iterations: int = 200
    budget: int | None = None
    seed: int = 0
    eps_min: float = 0.01
    eps_max: float = 0.5

    @property
    def max_evaluations(self) -> int:
        return self.restarts * self.iterations if self.budget is None else self.budget


@dataclass
class FrameSearchResult:
    found: bool
    kappa: np.ndarray | None
    frame: PositiveFrame | None
    residual: float | None
    iterations: int
    min_eig: float | None = None
    weights: np.ndarray | None = None


def candidate_elements(params: np.ndarray, d: int = 2, eps_min: float = 0.01, eps_max: float = 0.5) -> list[np.ndarray]:
    """Raw elements ``c_a [(1 - eps) |psi_a><psi_a| + eps 1/d]`` from a flat parameter vector.

    Layout for a qubit: four ``(theta, phi)`` pairs, four log-weights, one
    mixing parameter mapped into ``[eps_min, eps_max]`` by a logistic function.
    """
    if d != 2:
        raise ValueError("the built-in parametrisation covers qubits")
    n = d * d
    angles = params[: 2 * n].reshape(n, 2)
    logc = params[2 * n: 3 * n]
    eps = eps_min + (eps_max - eps_min) / (1 + np.exp(-params[3 * n]))
    out = []
    for (th, ph), lc in zip(angles, logc):
        psi = np.array([np.cos(th / 2), np.exp(1j * ph) * np.sin(th / 2)])
        out.append(np.exp(lc) * ((1 - eps) * np.outer(psi, psi.conj()) + eps * np.eye(d) / d))
    return out


def candidate_maps(decomp: BPlusDecomposition, grids: Sequence, frame: PositiveFrame):
    """``kappa``, new weights and candidate map grids ``w'_a phi'_a = sum_alpha kappa w_alpha phi_alpha``."""
    Q = decomp.dual.elements
    present = [a for a in decomp.present if grids[a] is not None]
    kappa = np.array([[np.trace(p @ Q[a]).real for a in range(decomp.n)] for p in frame.elements])
    w_new = kappa[:, present] @ decomp.weights[present]
    n_t = len(grids[present[0]])
    out = []
    for i in range(frame.n):
        if w_new[i] <= WEIGHT_TOL:
            out.append(None)
            continue
        row = []
        for k in range(n_t):
            m = sum(kappa[i, a] * decomp.weights[a] * grids[a][k].matrix for a in present)
            row.append(m / w_new[i])
        out.append(row)
    return kappa, w_new, out


def consistency_residual(decomp: BPlusDecomposition, grids: Sequence, kappa, w_new, cand) -> float:
    """``max_k || sum_a w'_a phi'_a - sum_alpha Tr[Q_alpha] w_alpha phi_alpha ||``.

    For a POVM basis frame ``Tr[Q_alpha] = 1`` and the right-hand side is the
    plain weighted sum of the original maps.
    """
    present = [a for a in decomp.present if grids[a] is not None]
    trq = [np.trace(q).real for q in decomp.dual.elements]
    worst = 0.0
    for k in range(len(grids[present[0]])):
        lhs = sum(w_new[i] * cand[i][k] for i in range(len(cand)) if cand[i] is not None)
        rhs = sum(trq[a] * decomp.weights[a] * grids[a][k].matrix for a in present)
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst


class _Found(Exception):
    pass


def frame_search(
    decomp: BPlusDecomposition,
    grids: Sequence,
    criterion: str = "divisibility",
    config: SearchConfig = SearchConfig(),
) -> FrameSearchResult:
    """Search for a frame whose candidate maps all pass the divisibility criterion.

    The decomposition's own frame is evaluated first (``kappa`` is then the
    identity for a basis frame). Every evaluation counts against
    ``config.max_evaluations``. Maps are never re-simulated: candidates are
    linear combinations of the supplied grids.
    """
    if criterion != "divisibility":
        raise ValueError("frame search supports the divisibility criterion")
    budget = config.max_evaluations
    used = 0

    def score(frame: PositiveFrame):
        kappa, w_new, cand = candidate_maps(decomp, grids, frame)
        worst = np.inf
        for row in cand:
            if row is None:
                continue
            r = cp_divisibility(row)
            if r.verdict == INDETERMINATE:
                return -1.0, kappa, w_new, cand
            worst = min(worst, r.min_eig)
        return float(worst), kappa, w_new, cand

    def finish(frame, sc, kappa, w_new, cand):
        res = consistency_residual(decomp, grids, kappa, w_new, cand)
        return FrameSearchResult(True, kappa, frame, res, used, sc, w_new)

    if budget <= 0:
        return FrameSearchResult(False, None, None, None, 0)
    used += 1
    sc, kappa, w_new, cand = score(decomp.frame)
    if sc >= -CHOI_TOL:
        return finish(decomp.frame, sc, kappa, w_new, cand)

    d = decomp.dims[0]
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 11]))
    holder = {}

    def objective(x):
        nonlocal used
        if used >= budget:
            raise StopIteration
        used += 1
        try:
            frame = canonicalize_povm(candidate_elements(x, d, config.eps_min, config.eps_max))
        except (NotAFrameError, ValueError):
            return 1e3
        sc, kappa, w_new, cand = score(frame)
        if sc >= -CHOI_TOL:
            holder["hit"] = (frame, sc, kappa, w_new, cand)
            raise _Found
        return -sc

    n_par = 3 * d * d + 1
    for _ in range(config.restarts):
        if used >= budget:
            break
        x0 = np.concatenate(
            [
                np.column_stack([np.arccos(rng.uniform(-1, 1, d * d)), rng.uniform(0, 2 * np.pi, d * d)]).ravel(),
                rng.normal(0, 0.3, d * d),
                rng.normal(-2, 1, 1),
            ]
        )
        assert len(x0) == n_par
        try:
            minimize(objective, x0, method="Nelder-Mead", options={"maxfev": config.iterations, "xatol": 1e-6, "fatol": 1e-10})
        except _Found:
            return finish(*holder["hit"])
        except StopIteration:
            break
    return FrameSearchResult(False, None, None, None, used)
