"""Limited-access tomography of a probe-plus-bath state from probe-only data.

The unknowns are ``x[alpha, b] = Tr[(P_alpha (x) W_b) rho_SB]`` for a probe
frame ``{P_alpha}`` and the bath Pauli basis ``{W_b}``; the state is
``rho_SB = sum x[alpha, b] Q_alpha (x) W_b / d_B``. An experiment is a
preparation map ``R_j`` on the probe, a pulse sequence (joint unitary ``U``)
and a probe observable ``O``; its unnormalised signal is
``Tr[(O (x) 1) U (R_j (x) I)(rho_SB) U^dag] = sum K[alpha, b] x[alpha, b]`` with
``K[alpha, b] = Tr[U^dag (O (x) 1) U (R_j(Q_alpha) (x) W_b)] / d_B``.
"""
from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .control import PulseSequence, cpmg_sequence, resonance_frequencies, sequence_unitary
from .frames import PositiveFrame, dual_frame, pauli_frame, qubit_sic_frame
from .opcore import (
    PAULIS,
    as_operator,
    closest_psd,
    dag,
    embed,
    expm_hermitian,
    fidelity,
    ket,
    partial_trace,
    projector,
    tensor_product,
)
from .superop import LocalOperation

QUOTED_RESONANCES = (7.30318, 1.63217)


class IdentifiabilityError(ValueError):
    """The design matrix does not determine every unknown."""

    def __init__(self, message: str, unidentifiable: list[str]):
        super().__init__(message)
        self.unidentifiable = unidentifiable


# ------------------------------------------------------------------ config

@dataclass(frozen=True)
class SequenceFamily:
    """CPMG sequences along ``axis`` with cycle ``2 pi / omega``.

    ``omega = None`` means free evolution for times ``m * free_step``. With
    ``all_repetitions`` every count ``m = 1..M`` is included, otherwise only ``M``.
    """

    axis: str
    omega: float | None
    M: int
    all_repetitions: bool = True
    free_step: float = 1.0

    def counts(self) -> list[int]:
        return list(range(1, self.M + 1)) if self.all_repetitions else [self.M]


@dataclass(frozen=True)
class NoiseModel:
    mean: float = 0.0
    variance: float = 0.1
    realizations: int = 100

    def __post_init__(self):
        if self.variance < 0:
            raise ValueError("noise variance must be non-negative")
        if self.realizations < 1:
            raise ValueError("need at least one noise realization")


@dataclass
class LatConfig:
    """Experiment description. Qubit 0 is the probe; the rest form the bath.

    ``couplings`` maps an unordered pair ``(i, j)`` to ``(g_x, g_y, g_z)``;
    each pair enters the Hamiltonian once.
    """

    n_qubits: int = 3
    couplings: dict = field(default_factory=dict)
    fields: tuple = (0.0, 1.0, 3.0)
    rho_sb: np.ndarray | None = None
    T1: float = 1.0
    menu: tuple = ()
    noise: NoiseModel = field(default_factory=NoiseModel)
    frame: str = "sic"
    seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        if self.n_qubits < 2:
            raise ValueError("need a probe and at least one bath qubit")
        if len(self.fields) != self.n_qubits:
            raise ValueError("one local field per qubit is required")
        for (i, j) in self.couplings:
            if i == j or not (0 <= i < self.n_qubits and 0 <= j < self.n_qubits):
                raise ValueError(f"bad coupling pair {(i, j)}")

    @property
    def dims(self) -> tuple[int, int]:
        return 2, 2 ** (self.n_qubits - 1)


def benchmark_state() -> np.ndarray:
    """``2/3 |0><0| (x) |phi+><phi+| + 1/3 |1><1| (x) |00><00|``."""
    phi = ket(0, 1, 1, 0)
    zero, one = np.diag([1.0, 0.0]), np.diag([0.0, 1.0])
    return (2 / 3) * np.kron(zero, projector(phi)) + (1 / 3) * np.kron(one, projector(ket(1, 0, 0, 0)))


def benchmark_couplings(g: float = 1.0, g_far: float = 0.01) -> dict:
    return {(0, 1): (g, g, g), (1, 2): (g, g, g), (0, 2): (g_far, g_far, g_far)}


def build_dipolar_hamiltonian(config: LatConfig) -> np.ndarray:
    """``sum_{pairs} sum_a g_a sigma_a^i sigma_a^j + sum_i J_i sigma_z^i``."""
    n = config.n_qubits
    dims = [2] * n
    h = np.zeros((2 ** n, 2 ** n), dtype=complex)
    for (i, j), gs in config.couplings.items():
        for g, a in zip(gs, "xyz"):
            if g:
                h += g * embed(PAULIS[a], i, dims) @ embed(PAULIS[a], j, dims)
    for i, J in enumerate(config.fields):
        if J:
            h += J * embed(PAULIS["z"], i, dims)
    return h


def bath_hamiltonian(config: LatConfig) -> np.ndarray:
    """Terms of the dipolar Hamiltonian acting only on the bath qubits."""
    sub = LatConfig(
        n_qubits=config.n_qubits - 1,
        couplings={(i - 1, j - 1): g for (i, j), g in config.couplings.items() if i > 0 and j > 0},
        fields=tuple(config.fields[1:]),
    ) if config.n_qubits > 2 else None
    if sub is None:
        return config.fields[1] * PAULIS["z"]
    return build_dipolar_hamiltonian(sub)


def probe_coupling_operators(config: LatConfig) -> list[np.ndarray]:
    """``B_a = sum_j g_a^(0, j) sigma_a^(j)`` on the bath, for a = x, y, z."""
    n_b = config.n_qubits - 1
    dims = [2] * n_b
    out = []
    for k, a in enumerate("xyz"):
        b = np.zeros((2 ** n_b, 2 ** n_b), dtype=complex)
        for (i, j), gs in config.couplings.items():
            if 0 in (i, j):
                other = j if i == 0 else i
                b += gs[k] * embed(PAULIS[a], other - 1, dims)
        out.append(b)
    return out


def lat_resonances(config: LatConfig):
    return resonance_frequencies(bath_hamiltonian(config), probe_coupling_operators(config))


# ------------------------------------------------------------ preparations

PAULI_STATES = {
    ("+", "x"): ket(1, 1),
    ("-", "x"): ket(1, -1),
    ("+", "y"): ket(1, 1j),
    ("-", "y"): ket(1, -1j),
    ("+", "z"): ket(1, 0),
    ("-", "z"): ket(0, 1),
}


@dataclass(frozen=True)
class PreparationMap:
    """Project onto ``|s_a, sigma_a>`` then rotate to ``|s_b, sigma_b>``."""

    source: tuple
    target: tuple

    @property
    def op(self) -> LocalOperation:
        return LocalOperation.project_prepare(PAULI_STATES[self.source], PAULI_STATES[self.target])

    @property
    def label(self) -> str:
        return f"{''.join(self.source)}->{''.join(self.target)}"


def preparation_maps() -> list[PreparationMap]:
    states = list(PAULI_STATES)
    return [PreparationMap(a, b) for a in states for b in states]


def bath_pauli_basis(n_bath: int) -> tuple[list[np.ndarray], list[str]]:
    ops, labels = [], []
    for combo in itertools.product("0xyz", repeat=n_bath):
        ops.append(tensor_product(*[PAULIS[c] for c in combo]))
        labels.append("".join("I" if c == "0" else c.upper() for c in combo))
    return ops, labels


def _frame(name: str) -> PositiveFrame:
    if name == "sic":
        return qubit_sic_frame()
    if name == "pauli":
        return pauli_frame()
    raise ValueError(f"unknown frame {name!r}")


# -------------------------------------------------------------- sequences

@dataclass
class Experiment:
    family: int
    repetitions: int
    sequence: PulseSequence | None
    duration: float
    unitary: np.ndarray = field(repr=False)


def build_experiments(config: LatConfig, H: np.ndarray | None = None) -> list[Experiment]:
    """Joint unitaries for every sequence of the menu (cycle unitaries reused)."""
    if not config.menu:
        raise ValueError("the sequence menu is empty")
    H = build_dipolar_hamiltonian(config) if H is None else H
    out = []
    for fi, fam in enumerate(config.menu):
        if fam.omega is None:
            step = expm_hermitian(H, fam.free_step)
            cycle_T = fam.free_step
            base = None
        else:
            cycle_T = 2 * np.pi / fam.omega
            base = cpmg_sequence(cycle_T, 1, fam.axis)
            step = sequence_unitary(base, H)
        u = np.eye(H.shape[0], dtype=complex)
        counts = set(fam.counts())
        for m in range(1, fam.M + 1):
            u = step @ u
            if m in counts:
                seq = None if base is None else base.with_repetitions(m)
                out.append(Experiment(fi, m, seq, m * cycle_T, u.copy()))
    return out


# ---------------------------------------------------------------- results

@dataclass
class LinearSystem:
    K: np.ndarray
    E: np.ndarray
    labels: list
    condition_number: float
    rank: int


@dataclass
class EstimationResult:
    raw: np.ndarray
    physical: np.ndarray
    truth: np.ndarray
    F_SB: float
    F_S: float
    condition_number: float
    rank: int
    n_experiments: int
    per_realization_F: np.ndarray = field(repr=False)
    x: np.ndarray = field(repr=False)


# ----------------------------------------------------------- simulation

def truth_state(config: LatConfig, H: np.ndarray | None = None) -> np.ndarray:
    H = build_dipolar_hamiltonian(config) if H is None else H
    rho0 = benchmark_state() if config.rho_sb is None else as_operator(config.rho_sb)
    u = expm_hermitian(H, config.T1)
    return u @ rho0 @ dag(u)


def _prepared(rho: np.ndarray, preps: Sequence[PreparationMap], d_b: int) -> np.ndarray:
    """Unnormalised ``(R_j (x) I) rho`` for every preparation."""
    out = []
    for p in preps:
        k = np.outer(PAULI_STATES[p.target], PAULI_STATES[p.source].conj())
        kk = np.kron(k, np.eye(d_b))
        out.append(kk @ rho @ dag(kk))
    return np.array(out)


def _observable_frames(u: np.ndarray, d_b: int) -> list[np.ndarray]:
    """Heisenberg-picture observables ``U^dag (O (x) 1) U`` for O = x, y, z."""
    return [dag(u) @ np.kron(PAULIS[a], np.eye(d_b)) @ u for a in "xyz"]


def _noise(seed: int, index: int, noise: NoiseModel) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([seed, index]))
    return rng.normal(noise.mean, np.sqrt(noise.variance), size=noise.realizations)


def simulate_expectations(config: LatConfig, prep: PreparationMap, seq: PulseSequence | None, observable: str,
                          rho: np.ndarray | None = None, index: int = 0):
    """Noisy probe expectation after a preparation and a pulse sequence.

    The prepared state is renormalised, evolved under the dipolar Hamiltonian
    with instantaneous pulses, and ``<O>`` is perturbed by independent
    Gaussian draws per realization.

    :returns: ``(mean, values, exact)``.
    """
    H = build_dipolar_hamiltonian(config)
    d_b = config.dims[1]
    rho = truth_state(config, H) if rho is None else as_operator(rho)
    prepped = _prepared(rho, [prep], d_b)[0]
    p = np.trace(prepped).real
    if p <= 1e-12:
        raise ValueError("preparation has zero probability")
    state = prepped / p
    u = np.eye(H.shape[0]) if seq is None else sequence_unitary(seq, H)
    exact = float(np.trace(np.kron(PAULIS[observable], np.eye(d_b)) @ u @ state @ dag(u)).real)
    values = exact + _noise(config.seed, index, config.noise)
    return float(values.mean()), values, exact


def probe_tomography(rho_s: np.ndarray, noise: NoiseModel, seed: int, tag: int = 2 ** 31) -> np.ndarray:
    """Noisy Pauli tomography of the probe: Bloch components plus averaged Gaussian noise."""
    r = []
    for k, a in enumerate("xyz"):
        exact = np.trace(rho_s @ PAULIS[a]).real
        r.append(exact + _noise(seed, tag + k, noise).mean())
    return 0.5 * (np.eye(2) + sum(c * PAULIS[a] for c, a in zip(r, "xyz")))


def design_matrix(config: LatConfig, experiments: Sequence[Experiment], frame: PositiveFrame,
                  preps: Sequence[PreparationMap]) -> tuple[np.ndarray, list]:
    """Rows ordered (experiment, observable, preparation); columns (alpha, b)."""
    d_b = config.dims[1]
    Q = dual_frame(frame).elements
    W, wl = bath_pauli_basis(config.n_qubits - 1)
    C = np.array([[p.op(q) for q in Q] for p in preps])  # [j, alpha, s, s']
    Wt = np.array(W)
    rows = []
    for ex in experiments:
        for A in _observable_frames(ex.unitary, d_b):
            A4 = A.reshape(2, d_b, 2, d_b)
            # Tr[A (X (x) W)] = sum A[s,k,s',k'] X[s',s] W[k',k]
            rows.append(np.einsum("skSK,jaSs,bKk->jab", A4, C, Wt).real / d_b)
    K = np.array(rows).reshape(-1, len(Q) * len(W))
    labels = [f"P{a}*{w}" for a in range(len(Q)) for w in wl]
    return K, labels


def _identifiability(K: np.ndarray, labels: list, tol: float = 1e-10):
    _, s, vt = np.linalg.svd(K, full_matrices=False)
    rank = int(np.sum(s > tol * s[0]))
    if rank < K.shape[1]:
        null = vt[rank:]
        weight = np.sum(np.abs(null) ** 2, axis=0)
        bad = [labels[i] for i in np.flatnonzero(weight > 1e-8)]
        raise IdentifiabilityError(f"design matrix has rank {rank} < {K.shape[1]}", bad)
    return rank, float(s[0] / s[rank - 1])


def assemble_solve(config: LatConfig, experiments=None, mode: str = "correlated"):
    """Build the linear system from noisy records and solve it by least squares.

    ``mode='correlated'`` solves for ``x[alpha, b]`` (probe frame times bath
    Paulis) using the 36 preparations. ``mode='factorisable'`` assumes
    ``rho_SB = rho_S (x) rho_B`` with ``rho_S`` known and solves for
    ``Tr[W_b rho_B]`` from the six Pauli eigenstate preparations.

    :returns: ``(LinearSystem, solution, extras)`` where ``extras`` carries the
        truth, per-realization observations and the probe estimate.
    """
    H = build_dipolar_hamiltonian(config)
    if experiments is None:
        experiments = build_experiments(config, H)
    d_s, d_b = config.dims
    truth = truth_state(config, H)
    rho_s = partial_trace(truth, (d_s, d_b))
    rho_s_hat = probe_tomography(rho_s, config.noise, config.seed)
    W, wl = bath_pauli_basis(config.n_qubits - 1)

    if mode == "correlated":
        frame = _frame(config.frame)
        preps = preparation_maps()
        K, labels = design_matrix(config, experiments, frame, preps)
        prepped = _prepared(truth, preps, d_b)
        p_true = np.einsum("jii->j", prepped).real
        p_hat = np.array([np.trace(projector(PAULI_STATES[p.source]) @ rho_s_hat).real for p in preps])
        Q = dual_frame(frame).elements
        trace_row = np.zeros(K.shape[1])
        for a, q in enumerate(Q):
            trace_row[a * len(W)] = np.trace(q).real
    elif mode == "factorisable":
        etas = [projector(v) for v in PAULI_STATES.values()]
        labels = [f"rho_B*{w}" for w in wl]
        rows = []
        for ex in experiments:
            for A in _observable_frames(ex.unitary, d_b):
                A4 = A.reshape(2, d_b, 2, d_b)
                rows.append(np.einsum("skSK,jSs,bKk->jb", A4, np.array(etas), np.array(W)).real / d_b)
        K = np.array(rows).reshape(-1, len(W))
        prepped = np.array([np.kron(e, partial_trace(truth, (d_s, d_b), keep="bath")) for e in etas])
        p_true = np.ones(len(etas))
        p_hat = np.ones(len(etas))
        trace_row = np.zeros(K.shape[1])
        trace_row[0] = 1.0
    else:
        raise ValueError(f"unknown mode {mode!r}")

    rank, cond = _identifiability(K, labels)
    n_prep = len(prepped)
    normed = prepped / p_true[:, None, None]

    def block(ei):
        ex = experiments[ei]
        vals = []
        for gi, A in enumerate(_observable_frames(ex.unitary, d_b)):
            exact = np.einsum("ij,kji->k", A, normed).real
            for j in range(n_prep):
                idx = (ei * 3 + gi) * n_prep + j
                noisy = exact[j] + _noise(config.seed, idx, config.noise)
                vals.append(p_hat[j] * noisy)
        return np.array(vals)

    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            blocks = list(pool.map(block, range(len(experiments))))
    else:
        blocks = [block(i) for i in range(len(experiments))]
    obs = np.concatenate(blocks, axis=0)  # [rows, realizations]
    Kt = np.vstack([K, trace_row])
    obs_t = np.vstack([obs, np.ones((1, obs.shape[1]))])
    mean_obs = obs_t.mean(axis=1)
    sol, *_ = np.linalg.lstsq(Kt, mean_obs, rcond=None)
    system = LinearSystem(Kt, mean_obs, labels, cond, rank)
    extras = {"truth": truth, "rho_s": rho_s, "rho_s_hat": rho_s_hat, "observations": obs_t, "W": W}
    return system, sol, extras


def state_from_solution(config: LatConfig, x: np.ndarray, mode: str = "correlated", rho_s=None) -> np.ndarray:
    d_s, d_b = config.dims
    W, _ = bath_pauli_basis(config.n_qubits - 1)
    if mode == "factorisable":
        rho_b = sum(c * w for c, w in zip(x, W)) / d_b
        return np.kron(as_operator(rho_s), rho_b)
    Q = dual_frame(_frame(config.frame)).elements
    X = np.asarray(x).reshape(len(Q), len(W))
    out = np.zeros((d_s * d_b, d_s * d_b), dtype=complex)
    for a, q in enumerate(Q):
        for b, w in enumerate(W):
            out += X[a, b] * np.kron(q, w)
    return out / d_b


def run_lat(config: LatConfig, mode: str = "correlated", per_realization: bool = False) -> EstimationResult:
    """Full pipeline: simulate, solve, project to a state, score fidelities."""
    system, x, ex = assemble_solve(config, mode=mode)
    rho_s_for_fact = ex["rho_s_hat"] if mode == "factorisable" else None
    raw = state_from_solution(config, x, mode, rho_s_for_fact)
    phys = closest_psd(raw)
    f_sb = fidelity(phys, ex["truth"])
    f_s = fidelity(closest_psd(ex["rho_s_hat"]), ex["rho_s"])
    per = np.array([])
    if per_realization:
        pinv = np.linalg.pinv(system.K)
        xs = pinv @ ex["observations"]
        per = np.array([fidelity(closest_psd(state_from_solution(config, xs[:, r], mode, rho_s_for_fact)), ex["truth"])
                        for r in range(xs.shape[1])])
    return EstimationResult(raw, phys, ex["truth"], f_sb, f_s, system.condition_number, system.rank,
                            system.K.shape[0] - 1, per, x)


# --------------------------------------------------------------- eQSP check

def eqsp_check(config: LatConfig, seq: PulseSequence | None, observable: str = "z", frame: PositiveFrame | None = None):
    """Recover ``y[alpha, alpha'] = w_alpha E(Q_alpha', O, U, rho_alpha)`` from the 36 preparations.

    Returns ``(y, unprepared_direct, unprepared_from_y)``; the last two agree on
    noiseless data because ``sum_alpha y[alpha, alpha]`` is the unprepared signal.
    """
    from .bplus import decompose, expansion_matrix

    H = build_dipolar_hamiltonian(config)
    d_s, d_b = config.dims
    frame = frame or _frame(config.frame)
    truth = truth_state(config, H)
    dec = decompose(truth, frame, (d_s, d_b))
    u = np.eye(H.shape[0]) if seq is None else sequence_unitary(seq, H)
    A = dag(u) @ np.kron(PAULIS[observable], np.eye(d_b)) @ u
    preps = preparation_maps()
    prepped = _prepared(truth, preps, d_b)
    e = np.einsum("ij,kji->k", A, prepped).real
    D = np.array([expansion_matrix(dec, p.op).ravel() for p in preps])
    y, *_ = np.linalg.lstsq(D, e, rcond=None)
    y = y.reshape(dec.n, dec.n)
    direct = float(np.trace(A @ truth).real)
    return y, direct, float(np.trace(y))


# ----------------------------------------------------------------- presets

def benchmark_config(menu: str = "full", seed: int = 0, T1: float = 1.0, noise: NoiseModel | None = None,
                 resonances: Sequence[float] | None = None, jobs: int = 1,
                 free_steps: int = 3, free_step: float = 0.5) -> LatConfig:
    """Three-qubit example with the menus compared in the worked example.

    Every menu starts from free-evolution records at times ``k * free_step``,
    ``k = 1..free_steps``, and adds CPMG sequences with cycle ``2 pi / Omega_r``
    repeated ``M`` times:

    * ``single``: x pulses, one resonance, ``M = 10``;
    * ``double``: x pulses, two resonances, ``M = 10``;
    * ``full``: x, y and z pulses, two resonances, ``M = 50``.

    Resonances default to the two strongest spectral resonances of the bath.
    """
    base = LatConfig(couplings=benchmark_couplings(), fields=(0.0, 1.0, 3.0), T1=T1,
                     noise=noise or NoiseModel(), seed=seed, jobs=jobs)
    if resonances is None:
        resonances = default_resonances(base)
    r1, r2 = resonances[:2]
    free = (SequenceFamily("x", None, free_steps, True, free_step),) if free_steps else ()
    if menu == "single":
        fams = (SequenceFamily("x", r1, 10, False),)
    elif menu == "double":
        fams = (SequenceFamily("x", r1, 10, False), SequenceFamily("x", r2, 10, False))
    elif menu == "full":
        fams = tuple(SequenceFamily(a, r, 50, False) for a in "xyz" for r in (r1, r2))
    else:
        raise ValueError(f"unknown menu {menu!r}")
    base.menu = free + fams
    return base


def default_resonances(config: LatConfig) -> tuple[float, float]:
    res = lat_resonances(config)
    pos = res.frequencies > 1e-9
    f, w = res.frequencies[pos], res.weights[pos]
    order = np.argsort(-w, kind="stable")
    return float(f[order[0]]), float(f[order[1]])
