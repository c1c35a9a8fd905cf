"""Command-line driver: typed configs, deterministic execution and result files.

Usage::

    bathpositive lat --preset benchmark-lat --seed 1 --out results/
    bathpositive dephasing --config dephasing.yaml --jobs 4

Configs are YAML mappings validated per subcommand. A config may name a
``preset``; preset values fill in first, then keys from the file, then
schema defaults for anything still missing.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from . import bplus, dephasing, frames, lat, markov, retro
from .opcore import DegenerateInputError, DimensionError, NotDensityError, random_density

log = logging.getLogger("bathpositive")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3
SUBCOMMANDS = ("bplus", "dephasing", "lat", "retro", "markov")
MAX_SEED = 2 ** 64 - 1


class ConfigError(ValueError):
    """Invalid or unreadable configuration."""


# ------------------------------------------------------------------ schemas

class _Schema(BaseModel):
    model_config = ConfigDict(extra="forbid")

    preset: str | None = None


class BplusSettings(_Schema):
    d_s: int = Field(2, ge=2)
    d_b: int = Field(2, ge=1)
    frame: Literal["sic", "pauli", "overcomplete"] = "sic"
    n_states: int = Field(10, ge=0)


class DephasingSettings(_Schema):
    eps: float = 1.0
    modes: list[tuple[float, float]] = [(1.0, 0.2)]
    nbar: float = Field(0.5, ge=0)
    initial: Literal["factorisable", "displacement", "phase"] = "displacement"
    amplitude: float = 0.3
    theta: float = 0.5
    cutoff: int = Field(30, ge=2)
    t_max: float = Field(4 * np.pi, gt=0)
    n_times: int = Field(20, ge=1)
    oracle: bool = True


class NoiseSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mean: float = 0.0
    variance: float = Field(0.1, ge=0)
    realizations: int = Field(100, ge=1)


class LatSettings(_Schema):
    menus: list[Literal["single", "double", "full"]] = ["single", "double", "full"]
    T1: float = Field(1.0, gt=0)
    noise: NoiseSettings = NoiseSettings()
    free_steps: int = Field(3, ge=0)
    free_step: float = Field(0.5, gt=0)


class RetroSettings(_Schema):
    gamma: float = Field(1.0, gt=0)
    s2: float = Field(1.0, ge=0)
    T: float = Field(5.0, gt=0)
    T_minus: float = Field(-2.0, le=0)
    trajectories: int = Field(10000, ge=2)
    dt: float = Field(0.02, gt=0)
    coherence0: float = Field(0.15, ge=0, le=0.5)
    max_rel_error: float = Field(0.05, gt=0)
    curve_points: int = Field(11, ge=2)


class MarkovSettings(_Schema):
    gamma: float = Field(0.3, gt=0)
    omega: float = 1.0
    p_plus: float = Field(0.6, gt=0, lt=1)
    t_max: float = Field(6.0, gt=0)
    n_times: int = Field(31, ge=2)
    restarts: int = Field(64, ge=0)
    iterations: int = Field(200, ge=1)


SCHEMAS = {
    "bplus": BplusSettings,
    "dephasing": DephasingSettings,
    "lat": LatSettings,
    "retro": RetroSettings,
    "markov": MarkovSettings,
}

PRESETS: dict[str, tuple[str, dict]] = {
    "benchmark-lat": ("lat", {"menus": ["single", "double", "full"], "T1": 1.0,
                          "noise": {"mean": 0.0, "variance": 0.1, "realizations": 100}}),
    "lat-noiseless": ("lat", {"menus": ["full"], "noise": {"variance": 0.0, "realizations": 1}}),
    "bplus-demo": ("bplus", {"d_s": 2, "d_b": 2, "frame": "sic", "n_states": 10}),
    "dephasing-demo": ("dephasing", {"initial": "displacement", "nbar": 0.5}),
    "retro-demo": ("retro", {"gamma": 1.0, "s2": 1.0, "T": 5.0, "T_minus": -2.0, "trajectories": 10000}),
    "markov-demo": ("markov", {"gamma": 0.3, "omega": 1.0}),
}


@dataclass
class RunConfig:
    subcommand: str
    settings: BaseModel
    out: Path
    seed: int = 0
    jobs: int = 1
    verbose: int = 0
    config_path: Path | None = None

    def __post_init__(self):
        if self.subcommand not in SUBCOMMANDS:
            raise ConfigError(f"unknown subcommand {self.subcommand!r}")
        if not 0 <= self.seed <= MAX_SEED:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")


def _format_validation(err: ValidationError) -> str:
    parts = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        parts.append(f"{loc}: {e['msg']}")
    return "; ".join(parts)


def _merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def build_settings(subcommand: str, data: dict | None = None, preset: str | None = None) -> BaseModel:
    """Validate ``data`` for a subcommand, layering a preset underneath it."""
    data = dict(data or {})
    preset = data.get("preset") or preset
    base: dict = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        target, values = PRESETS[preset]
        if target != subcommand:
            raise ConfigError(f"preset {preset!r} belongs to subcommand {target!r}")
        base = _merge(values, {"preset": preset})
    try:
        return SCHEMAS[subcommand].model_validate(_merge(base, data))
    except ValidationError as err:
        raise ConfigError(f"invalid {subcommand} config: {_format_validation(err)}") from err


def parse_config(path, subcommand: str, preset: str | None = None) -> BaseModel:
    """Read a YAML config file and return the validated, fully populated settings.

    :raises ConfigError: missing file, malformed YAML, or schema violation.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as err:
        raise ConfigError(f"cannot parse {path}: {err}") from err
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return build_settings(subcommand, data, preset)


def echo_config(settings: BaseModel) -> str:
    """Fully populated config as YAML text; re-parsing it gives the same hash."""
    return yaml.safe_dump(settings.model_dump(mode="json"), sort_keys=True)


def config_hash(subcommand: str, settings: BaseModel, seed: int) -> str:
    """SHA-256 of the canonical JSON of the semantic inputs (parallelism and paths excluded)."""
    payload = {"subcommand": subcommand, "seed": int(seed), "settings": settings.model_dump(mode="json")}
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


# ------------------------------------------------------------------ records

@dataclass
class ResultRecord:
    run_id: str
    subcommand: str
    config_hash: str
    outputs: dict
    duration: float = 0.0


@dataclass
class RunOutput:
    records: list
    tables: dict = field(default_factory=dict)


def to_jsonable(x):
    """Convert numpy values and complex numbers (as ``[re, im]``) to JSON types."""
    if isinstance(x, dict):
        return {str(k): to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [to_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return to_jsonable(x.tolist())
    if isinstance(x, (complex, np.complexfloating)):
        return [float(x.real), float(x.imag)]
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


def _seed_sequence(seed: int, *tags: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, *tags])


def _pool_map(fn, items, jobs: int) -> list:
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------- runners

def _frame(name: str, d: int) -> frames.PositiveFrame:
    if name == "sic":
        if d != 2:
            raise ConfigError("the SIC frame is built in for qubits only")
        return frames.qubit_sic_frame()
    if name == "pauli":
        if d != 2:
            raise ConfigError("the Pauli frame is built in for qubits only")
        return frames.pauli_frame()
    if d != 2:
        raise ConfigError("the overcomplete frame is built in for qubits only")
    return frames.overcomplete_pauli_frame()


def run_bplus(cfg: RunConfig) -> RunOutput:
    s: BplusSettings = cfg.settings
    frame = _frame(s.frame, s.d_s)
    dims = (s.d_s, s.d_b)

    def one(i: int):
        rng = np.random.default_rng(_seed_sequence(cfg.seed, i))
        rho = random_density(s.d_s * s.d_b, rng)
        dec = bplus.decompose(rho, frame, dims)
        res = float(np.linalg.norm(bplus.reconstruct(dec) - rho))
        return {"index": i, "residual": res, "weights": dec.weights, "weight_sum": float(np.sum(dec.weights))}

    rows = _pool_map(one, range(s.n_states), cfg.jobs)
    table = [{"index": r["index"], "residual": r["residual"], "weight_sum": r["weight_sum"]} for r in rows]
    return RunOutput([{"kind": "bplus_state", **r} for r in rows], {"bplus": (["index", "residual", "weight_sum"], table)})


def run_dephasing(cfg: RunConfig) -> RunOutput:
    s: DephasingSettings = cfg.settings
    if len(s.modes) != 1 and s.initial != "factorisable":
        raise ConfigError("correlated initial states are built for a single mode")
    spec = dephasing.DephasingSpec(s.eps, tuple(s.modes))
    plus = np.full((2, 2), 0.5, dtype=complex)
    n_modes = len(s.modes)
    if s.initial == "factorisable":
        bath = dephasing.gaussian_to_truncated(dephasing.GaussianBathState((0,) * n_modes, (s.nbar,) * n_modes), s.cutoff)
        rho = np.kron(plus, bath)
    elif s.initial == "displacement":
        rho = dephasing.conditional_displacement_state(plus, s.amplitude, s.nbar, s.cutoff)
    else:
        rho = dephasing.conditional_phase_state(plus, s.amplitude, s.nbar, s.theta, s.cutoff)
    d_b = rho.shape[0] // 2
    dec = bplus.decompose(rho, frames.qubit_sic_frame(), (2, d_b))
    times = np.linspace(0.0, s.t_max, s.n_times)

    def one(k: int):
        t = float(times[k])
        r = dephasing.dephase_correlated(dec, spec, t, s.cutoff)
        row = {"t": t, "coherence": complex(r[0, 1]), "coherence_abs": float(abs(r[0, 1])),
               "p0": float(r[0, 0].real), "p1": float(r[1, 1].real)}
        if s.oracle:
            o = dephasing.dephasing_oracle(rho, spec, t, s.cutoff)
            row["oracle_abs"] = float(abs(o[0, 1]))
            row["deviation"] = float(abs(abs(o[0, 1]) - abs(r[0, 1])))
        return row

    rows = _pool_map(one, range(len(times)), cfg.jobs)
    cols = ["t", "coherence_abs", "p0", "p1"] + (["oracle_abs", "deviation"] if s.oracle else [])
    return RunOutput([{"kind": "coherence", **r} for r in rows], {"coherence": (cols, rows)})


def run_lat_cmd(cfg: RunConfig) -> RunOutput:
    s: LatSettings = cfg.settings
    noise = lat.NoiseModel(s.noise.mean, s.noise.variance, s.noise.realizations)
    rows, records = [], []
    for menu in s.menus:
        conf = lat.benchmark_config(menu, seed=cfg.seed, T1=s.T1, noise=noise, jobs=cfg.jobs,
                                free_steps=s.free_steps, free_step=s.free_step)
        res = lat.run_lat(conf)
        M = max(f.M for f in conf.menu if f.omega is not None)
        row = {"menu": menu, "M": M, "condition_number": res.condition_number, "F_SB": res.F_SB, "F_S": res.F_S}
        rows.append(row)
        records.append({"kind": "lat", **row, "rank": res.rank, "n_experiments": res.n_experiments,
                        "estimate": res.physical})
    res = lat.lat_resonances(lat.benchmark_config("full", T1=s.T1))
    computed = [float(w) for w in res.positive]
    log.info("bath resonances %s (published values %s)", computed, list(lat.QUOTED_RESONANCES))
    records.append({"kind": "resonances", "computed": computed, "quoted": list(lat.QUOTED_RESONANCES)})
    cols = ["menu", "M", "condition_number", "F_SB", "F_S"]
    return RunOutput(records, {"lat": (cols, rows)})


def run_retro(cfg: RunConfig) -> RunOutput:
    s: RetroSettings = cfg.settings
    model = retro.StationaryNoiseModel(s.gamma, s.s2)
    res = retro.classical_retrodiction_demo(model, s.coherence0, s.T, s.trajectories, s.T_minus, s.dt, cfg.seed,
                                            s.max_rel_error)
    taus = np.linspace(0.0, -s.T_minus, s.curve_points)
    curve = retro.coherence_curve(res.table, s.coherence0, taus)
    rows = [{"t": -float(tau), "retrodicted_abs": float(c), "truth_abs": s.coherence0 / model.coherence_factor(tau)}
            for tau, c in zip(taus, curve)]
    lags = res.table.times
    n = len(lags)
    corr_rows = [{"lag": float(-lags[k]), "correlator": float(np.real(res.table.values[n - 1, k])),
                  "closed_form": float(model.autocovariance(lags[k]))} for k in range(n)]
    record = {"kind": "retrodiction", "retrodicted": res.retrodicted, "truth": res.truth,
              "relative_error": res.relative_error, "mc_truth": res.mc_truth,
              "mc_error_estimate": res.mc_error_estimate,
              "stationary_consistent": res.table.stationary_consistent}
    return RunOutput([record], {"coherence": (["t", "retrodicted_abs", "truth_abs"], rows),
                                "correlator": (["lag", "correlator", "closed_form"], corr_rows)})


def markov_instance(gamma: float, omega: float, p_plus: float, times):
    """Zero-discord qubit-bath state probed in the SIC frame.

    The state is ``p |+><+| (x) |0><0| + (1 - p) |-><-| (x) |1><1|``. Bath
    state ``k`` multiplies the system coherence by
    ``exp(-gamma t) exp(+-i omega t)``, a divisible semigroup, while each SIC
    label sees a mixture of both branches and can show revivals.
    """
    from .opcore import ket, projector

    plus, minus = projector(ket(1, 1)), projector(ket(1, -1))
    b0, b1 = projector(ket(1, 0)), projector(ket(0, 1))
    rho = p_plus * np.kron(plus, b0) + (1 - p_plus) * np.kron(minus, b1)
    dec = bplus.decompose(rho, frames.qubit_sic_frame(), (2, 2))
    branch = [[markov.coherence_map(np.exp(-gamma * t + sgn * 1j * omega * t)).matrix for t in times]
              for sgn in (1, -1)]
    P = dec.frame.elements
    grids = []
    for a in range(dec.n):
        c = [p_plus * np.trace(P[a] @ plus).real, (1 - p_plus) * np.trace(P[a] @ minus).real]
        grids.append([markov.SuperOperator((c[0] * branch[0][k] + c[1] * branch[1][k]) / dec.weights[a])
                      for k in range(len(times))])
    return dec, grids


def run_markov(cfg: RunConfig) -> RunOutput:
    s: MarkovSettings = cfg.settings
    times = np.linspace(0.0, s.t_max, s.n_times)
    dec, grids = markov_instance(s.gamma, s.omega, s.p_plus, times)
    rep = markov.comp_markov_check(dec, criterion="divisibility", maps=grids)
    rows = [{"alpha": a, "weight": float(dec.weights[a]), "verdict": rep.verdicts[a], "min_eig": rep.min_eigs[a]}
            for a in sorted(rep.verdicts)]
    search = markov.frame_search(dec, grids, config=markov.SearchConfig(s.restarts, s.iterations, seed=cfg.seed))
    records = [{"kind": "verdict", **r} for r in rows]
    records.append({"kind": "report", "criterion": rep.criterion, "overall": rep.overall, "offending": rep.offending,
                    "worst_min_eig": rep.worst_min_eig})
    records.append({"kind": "frame_search", "found": search.found, "iterations": search.iterations,
                    "residual": search.residual, "kappa": search.kappa, "weights": search.weights,
                    "frame": None if search.frame is None else list(search.frame.elements)})
    return RunOutput(records, {"verdicts": (["alpha", "weight", "verdict", "min_eig"], rows)})


RUNNERS = {"bplus": run_bplus, "dephasing": run_dephasing, "lat": run_lat_cmd, "retro": run_retro,
           "markov": run_markov}

NUMERIC_ERRORS = (
    lat.IdentifiabilityError,
    DegenerateInputError,
    DimensionError,
    NotDensityError,
    bplus.BathNotPositiveError,
    bplus.ZeroProbabilityError,
    dephasing.TruncationError,
    retro.InsufficientTrajectoriesError,
    retro.ExtrapolationRangeError,
    np.linalg.LinAlgError,
)


class RunError(RuntimeError):
    """Module failure with run context attached."""

    def __init__(self, message: str, cause: BaseException):
        super().__init__(message)
        self.cause = cause


def run_id_for(subcommand: str, chash: str) -> str:
    return f"{subcommand}-{chash[:12]}"


def execute(cfg: RunConfig) -> tuple[list[ResultRecord], dict, float]:
    """Run the subcommand; returns records, tables and the wall-clock duration.

    Records depend only on (settings, seed); parallelism changes scheduling,
    never the numbers.
    """
    chash = config_hash(cfg.subcommand, cfg.settings, cfg.seed)
    rid = run_id_for(cfg.subcommand, chash)
    start = time.perf_counter()
    try:
        out = RUNNERS[cfg.subcommand](cfg)
    except ConfigError:
        raise
    except NUMERIC_ERRORS as err:
        raise RunError(f"run {rid} ({cfg.subcommand}, seed {cfg.seed}) failed: {err}", err) from err
    duration = time.perf_counter() - start
    records = [ResultRecord(rid, cfg.subcommand, chash, to_jsonable(o), duration) for o in out.records]
    return records, out.tables, duration


def _csv_text(columns: list, rows: list) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in r.items()})
    return buf.getvalue()


def emit_results(records: list[ResultRecord], tables: dict, outdir, run_id: str, duration: float | None = None,
                 config_text: str | None = None) -> list[Path]:
    """Write ``<run_id>.jsonl``, one ``<run_id>_<table>.csv`` per table and optional sidecars.

    Record lines omit the wall-clock duration so result files are
    byte-identical across reruns; it goes to ``<run_id>.timing.json``.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = []
    lines = []
    for r in records:
        obj = {"run_id": r.run_id, "subcommand": r.subcommand, "config_hash": r.config_hash, "outputs": r.outputs}
        lines.append(json.dumps(obj, sort_keys=True, separators=(",", ":")))
    p = outdir / f"{run_id}.jsonl"
    p.write_text("".join(line + "\n" for line in lines), encoding="utf-8", newline="\n")
    paths.append(p)
    for name, (cols, rows) in sorted(tables.items()):
        p = outdir / f"{run_id}_{name}.csv"
        p.write_text(_csv_text(cols, rows), encoding="utf-8", newline="\n")
        paths.append(p)
    if config_text is not None:
        p = outdir / f"{run_id}.config.yaml"
        p.write_text(config_text, encoding="utf-8", newline="\n")
        paths.append(p)
    if duration is not None:
        p = outdir / f"{run_id}.timing.json"
        p.write_text(json.dumps({"run_id": run_id, "duration_s": duration}) + "\n", encoding="utf-8", newline="\n")
    return paths


# --------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bathpositive", description="B+ decomposition toolkit driver")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=f"run the {name} workflow")
        p.add_argument("--config", type=Path, help="YAML config file")
        p.add_argument("--out", type=Path, default=Path("results"), help="output directory")
        p.add_argument("--seed", type=int, default=0, help="64-bit unsigned seed")
        p.add_argument("--jobs", type=int, default=1, help="worker threads")
        p.add_argument("--preset", help="named preset: " + ", ".join(k for k, (t, _) in PRESETS.items() if t == name))
        p.add_argument("--verbose", "-v", action="count", default=0)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose > 1 else logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.config is not None:
            settings = parse_config(args.config, args.subcommand, args.preset)
        else:
            settings = build_settings(args.subcommand, {}, args.preset)
        cfg = RunConfig(args.subcommand, settings, args.out, args.seed, args.jobs, args.verbose, args.config)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    text = echo_config(settings)
    log.info("config:\n%s", text)
    try:
        records, tables, duration = execute(cfg)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except RunError as err:
        print(f"numerical error: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    rid = run_id_for(cfg.subcommand, config_hash(cfg.subcommand, settings, cfg.seed))
    try:
        paths = emit_results(records, tables, cfg.out, rid, duration, text)
    except OSError as err:
        print(f"I/O error: {err}", file=sys.stderr)
        return EXIT_IO
    for p in paths:
        log.info("wrote %s", p)
    print(rid)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
