"""Experiment runner: NMSE/MSE sweeps, convergence traces and operator benchmarks.

Every sweep point draws its maps and noise from ``SeedSequence([seed, rep])``,
so the same repetition shares one channel realization across SNR, sample
count and estimator. Rows are collected in a fixed order and written with
fixed float formatting, which makes the CSV a pure function of the spec.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baseline import mfocuss, mmv_from_batch
from .channel import BeamPowerMap, simulate_rx, stacked_omega, synth_power_map
from .chest import DB_FLOOR, mmse_estimate, mse_metric, normalize_pair, to_db
from .errors import BeamstatError, ZeroTruth
from .fastops import fast_operator
from .manifold import build_grids
from .pilots import build_pilot_matrix
from .powerest import (MomentObservation, accumulate_phi, dense_operator, estimate, kl_gradient,
                       split_per_user)
from .sysmodel import SystemConfig, validate

ESTIMATORS = ("kl-dense", "kl-fast", "mfocuss")
REFERENCE_PRIORS = ("truth", "ones")
SCENARIOS = {
    "orthogonal": {"Q": 1, "P_per_root": (12,)},
    "two-root": {"Q": 2, "P_per_root": (12, 12)},
}
CSV_HEADER = ["scenario", "estimator", "snr_db", "T", "rep", "seed", "nmse_db", "mse_db",
              "iters", "runtime_ms", "config_hash", "build_id", "error"]
ROW_ERRORS = (BeamstatError, ArithmeticError, ValueError, MemoryError, np.linalg.LinAlgError)


def snr_to_sigma2(snr_db: float) -> float:
    """Noise variance for unit pilot power per subcarrier."""
    return float(10.0 ** (-snr_db / 10.0))


def _as_omega(x) -> np.ndarray:
    return x.omega if isinstance(x, BeamPowerMap) else np.asarray(x, dtype=float)


def nmse_metric(omega_hat_users, omega_true_users, base: float = 10.0) -> float:
    """``10 log10`` of the user-averaged normalized squared Frobenius error.

    Raises
    ------
    ZeroTruth
        If some true map is identically zero.
    """
    if len(omega_hat_users) != len(omega_true_users):
        raise ValueError("user counts differ")
    ratios = []
    for hat, true in zip(omega_hat_users, omega_true_users):
        hat, true = _as_omega(hat), _as_omega(true)
        if hat.shape != true.shape:
            raise ValueError(f"shape mismatch {hat.shape} vs {true.shape}")
        den = float(np.sum(true ** 2))
        if den == 0:
            raise ZeroTruth("true power map is zero")
        ratios.append(float(np.sum((hat - true) ** 2)) / den)
    return to_db(float(np.mean(ratios)), base)


def build_id() -> str:
    """Content hash of the package sources, stable across runs and machines."""
    h = hashlib.sha1()
    for path in sorted(Path(__file__).parent.glob("*.py")):
        h.update(path.name.encode())
        h.update(path.read_bytes())
    return h.hexdigest()[:12]


def config_hash(cfg: SystemConfig) -> str:
    blob = json.dumps(cfg.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def scenario_config(name: str, base: SystemConfig | None = None) -> SystemConfig:
    if name not in SCENARIOS:
        raise ValueError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}")
    return (base or SystemConfig()).replace(**SCENARIOS[name])


@dataclass(frozen=True)
class ExperimentSpec:
    scenario: str
    config: SystemConfig
    snr_db: tuple
    samples: tuple = (10,)
    estimators: tuple = ("kl-fast",)
    repetitions: int = 1
    seed: int = 0
    compute_mse: bool = False
    D: int = 200
    record_timing: bool = False
    log_base: float = 10.0
    out: str | None = None

    def __post_init__(self):
        if len(self.snr_db) == 0:
            raise ValueError("SNR list must not be empty")
        if len(self.samples) == 0 or any(int(t) < 1 for t in self.samples):
            raise ValueError("sample counts must be >= 1")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        for e in self.estimators:
            if e not in ESTIMATORS + REFERENCE_PRIORS:
                raise ValueError(f"unknown estimator {e!r}")


@dataclass
class ResultRow:
    scenario: str
    estimator: str
    snr_db: float
    T: int
    rep: int
    seed: int
    nmse_db: float | None = None
    mse_db: float | None = None
    iters: int | None = None
    runtime_ms: float | None = None
    config_hash: str = ""
    build_id: str = ""
    error: str = ""

    def as_csv(self) -> list:
        def num(x):
            return "" if x is None else f"{x:.6f}"
        return [self.scenario, self.estimator, f"{self.snr_db:g}", str(self.T), str(self.rep),
                str(self.seed), num(self.nmse_db), num(self.mse_db),
                "" if self.iters is None else str(self.iters), num(self.runtime_ms),
                self.config_hash, self.build_id, self.error]


def row_seed(base_seed: int, rep: int) -> int:
    return int(np.random.SeedSequence([int(base_seed), int(rep)]).generate_state(1)[0])


@dataclass
class _Setup:
    cfg: SystemConfig
    dims: object
    grids: object
    pilots: object
    ops: dict = field(default_factory=dict)

    def op(self, kind: str):
        if kind not in self.ops:
            self.ops[kind] = (dense_operator if kind == "kl-dense" else fast_operator)(self.grids, self.pilots)
        return self.ops[kind]


def make_setup(cfg: SystemConfig) -> _Setup:
    dims = validate(cfg)
    grids = build_grids(cfg, dims)
    return _Setup(cfg, dims, grids, build_pilot_matrix(cfg, dims, grids))


# Per-user map total; 1 makes E||H_k||_F^2 = M_r M_p so that SNR = 1 / sigma_z2.
MAP_POWER = 1.0


def draw_maps(setup: _Setup, seed: int) -> list:
    rng = np.random.default_rng([seed, 1])
    return [synth_power_map(setup.dims, rng, total_power=MAP_POWER) for _ in range(setup.dims.K)]


def estimate_omega(setup: _Setup, batch, estimator: str, maps=None, D: int = 200):
    """Stacked power estimate and iteration count for one batch."""
    if estimator in ("kl-dense", "kl-fast"):
        st = estimate(accumulate_phi(batch, setup.grids, setup.pilots), setup.op(estimator), D=D)
        return st.omega_est, st.iter
    if estimator == "mfocuss":
        res = mfocuss(mmv_from_batch(batch, setup.grids, setup.pilots))
        return res.omega_hat, res.iters
    if estimator == "truth":
        return stacked_omega(maps, setup.cfg, setup.dims), 0
    if estimator == "ones":
        return np.ones((setup.dims.N_r, setup.dims.stacked_width)), 0
    raise ValueError(f"unknown estimator {estimator!r}")


def _run_point(spec: ExperimentSpec, rep: int, snr: float, T: int) -> list:
    seed = row_seed(spec.seed, rep)
    cfg = spec.config.replace(T=int(T), sigma_z2=snr_to_sigma2(snr), seed=seed)
    setup = make_setup(cfg)
    chash, bid = config_hash(spec.config), build_id()
    rows = []
    try:
        maps = draw_maps(setup, seed)
        batch = simulate_rx(maps, setup.pilots, setup.grids, cfg, setup.dims, seed=seed)
    except ROW_ERRORS as exc:
        return [ResultRow(spec.scenario, e, snr, int(T), rep, seed, config_hash=chash, build_id=bid,
                          error=f"{type(exc).__name__}: {exc}") for e in spec.estimators]
    for est in spec.estimators:
        row = ResultRow(spec.scenario, est, float(snr), int(T), rep, seed, config_hash=chash, build_id=bid)
        t0 = time.perf_counter()
        try:
            omega, row.iters = estimate_omega(setup, batch, est, maps, spec.D)
            users = split_per_user(omega, setup.dims, cfg.P_per_root)
            row.nmse_db = nmse_metric(users, maps, spec.log_base)
            if spec.compute_mse:
                H_hat = mmse_estimate(batch.Y, omega, setup.grids, setup.pilots, batch.sigma_z2,
                                      setup.dims, cfg.P_per_root)
                row.mse_db = mse_metric(*normalize_pair(H_hat, batch.H_truth), base=spec.log_base)
        except ROW_ERRORS as exc:
            row.error = f"{type(exc).__name__}: {exc}"
        if spec.record_timing:
            row.runtime_ms = 1e3 * (time.perf_counter() - t0)
        rows.append(row)
    return rows


def run_experiment(spec: ExperimentSpec, jobs: int = 1) -> list:
    """All rows of a sweep in (rep, snr, T, estimator) order.

    Points run in a process pool when ``jobs > 1``; the row order and
    contents do not depend on ``jobs``.
    """
    points = [(rep, float(snr), int(T)) for rep in range(spec.repetitions)
              for snr in spec.snr_db for T in spec.samples]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_run_point, [spec] * len(points), *zip(*points)))
    else:
        parts = [_run_point(spec, *pt) for pt in points]
    return [row for part in parts for row in part]


def write_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow(r.as_csv())


def write_json(rows, path) -> None:
    with open(path, "w") as fh:
        json.dump([dataclasses.asdict(r) for r in rows], fh, indent=1, sort_keys=True)


def summarize(rows, key: str = "nmse_db") -> dict:
    """Median of ``key`` per (estimator, snr, T) over repetitions, skipping failed rows."""
    groups: dict = {}
    for r in rows:
        val = getattr(r, key)
        if r.error or val is None:
            continue
        groups.setdefault((r.estimator, r.snr_db, r.T), []).append(val)
    return {k: float(np.median(v)) for k, v in sorted(groups.items())}


def convergence_traces(cfg: SystemConfig, snr_db, seed: int = 0, D: int = 200,
                       estimator: str = "kl-fast") -> dict:
    """Objective trace of the KL estimator per SNR on one fixed realization."""
    out = {}
    for snr in snr_db:
        c = cfg.replace(sigma_z2=snr_to_sigma2(snr), seed=seed)
        setup = make_setup(c)
        maps = draw_maps(setup, seed)
        batch = simulate_rx(maps, setup.pilots, setup.grids, c, setup.dims, seed=seed)
        st = estimate(accumulate_phi(batch, setup.grids, setup.pilots), setup.op(estimator), D=D)
        out[float(snr)] = np.asarray(st.objective)
    return out


def iterations_to_within(trace, rel: float = 0.01) -> int:
    """First index at which ``trace`` is within ``rel`` of its last value."""
    trace = np.asarray(trace)
    final = trace[-1]
    hit = np.nonzero(trace <= final + rel * abs(final))[0]
    return int(hit[0])


DEFAULT_BENCH_SIZES = ((8, 8, 48), (12, 12, 72), (16, 16, 96), (24, 24, 144))


def _best_time(fn, repeats: int) -> float:
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_fast_vs_dense(sizes=DEFAULT_BENCH_SIZES, repeats: int = 5, seed: int = 0) -> list:
    """Time one KL gradient evaluation with dense and FFT operators.

    Each size is ``(M_rz, M_rx, M_p)`` with fine factors 2 and one root.
    Returns one dict per size with times in ms, their ratio and the largest
    relative deviation between the two gradients.
    """
    rows = []
    for M_rz, M_rx, M_p in sizes:
        cfg = SystemConfig(M_rz=M_rz, M_rx=M_rx, M_p=M_p, M_c=max(512, 8 * M_p), P_per_root=(1,))
        setup = make_setup(cfg)
        dense, fast = setup.op("kl-dense"), setup.op("kl-fast")
        rng = np.random.default_rng([seed, M_rz, M_rx, M_p])
        M = rng.random(dense.shape)
        phi = dense(rng.random(dense.shape)) + 1.0
        obs = MomentObservation(phi=phi, T_used=1, noise_floor=np.asarray(1.0))
        g_dense = kl_gradient(M, obs, dense)
        g_fast = kl_gradient(M, obs, fast)
        diff = float(np.abs(g_fast - g_dense).max() / np.abs(g_dense).max())
        t_dense = _best_time(lambda: kl_gradient(M, obs, dense), repeats)
        t_fast = _best_time(lambda: kl_gradient(M, obs, fast), repeats)
        rows.append({"M_rz": M_rz, "M_rx": M_rx, "M_p": M_p, "N_r": setup.dims.N_r,
                     "width": setup.dims.stacked_width, "dense_ms": 1e3 * t_dense,
                     "fast_ms": 1e3 * t_fast, "ratio": t_dense / t_fast, "max_rel_diff": diff})
    return rows


__all__ = [
    "CSV_HEADER", "DB_FLOOR", "ESTIMATORS", "ExperimentSpec", "ResultRow", "SCENARIOS",
    "bench_fast_vs_dense", "build_id", "config_hash", "convergence_traces", "iterations_to_within",
    "nmse_metric", "run_experiment", "scenario_config", "snr_to_sigma2", "summarize", "write_csv",
]
