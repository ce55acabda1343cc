"""Beam power maps, 2D-BSCM channel draws and received pilot simulation."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import LayoutMismatch
from .manifold import delay_block_embed

CLIP_REL = 1e-8
LAYOUT_RTOL = 1e-9


@dataclass(frozen=True)
class BeamPowerMap:
    omega: np.ndarray
    m_root: np.ndarray

    @classmethod
    def from_omega(cls, omega) -> "BeamPowerMap":
        m = np.sqrt(np.maximum(np.asarray(omega, dtype=float), 0.0))
        # omega is rebuilt from m so that m * m == omega holds bitwise
        return cls(omega=m * m, m_root=m)

    def support_fraction(self, rel: float = 1e-6) -> float:
        peak = self.omega.max()
        if peak == 0:
            return 0.0
        return float(np.mean(self.omega > rel * peak))


def complex_normal(rng, shape) -> np.ndarray:
    """Unit-variance circularly-symmetric complex Gaussian samples."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def _wrapped_distance(n: int, center: int) -> np.ndarray:
    k = np.arange(n)
    d = np.abs(k - center)
    return np.minimum(d, n - d)


def synth_power_map(dims, rng, n_clusters: int = 2, angle_spread: float = 0.3,
                    delay_spread: float = 0.3, total_power=None) -> BeamPowerMap:
    """Random clustered beam power map over the angle x delay grid.

    Each cluster is a Gaussian bump on the (wrapped) 2D angle grid times a
    one-sided exponential decay in delay, starting at a random delay tap.
    Spreads are in grid bins. The map is scaled so that it sums to
    ``total_power`` (``N_f`` by default). A total of 1 gives
    ``E||H||_F^2 = M_r * M_p`` for unit-modulus grids.
    """
    if n_clusters < 1:
        raise ValueError("n_clusters must be >= 1")
    if angle_spread <= 0 or delay_spread <= 0:
        raise ValueError("spreads must be > 0")
    total = float(dims.N_f if total_power is None else total_power)

    omega = np.zeros((dims.N_r, dims.N_f))
    ell = np.arange(dims.N_f)
    for _ in range(n_clusters):
        cz = rng.integers(dims.N_z)
        cx = rng.integers(dims.N_x)
        c0 = rng.integers(dims.N_f)
        power = rng.uniform(0.2, 1.0)
        with np.errstate(under="ignore"):
            pz = np.exp(-0.5 * (_wrapped_distance(dims.N_z, cz) / angle_spread) ** 2)
            px = np.exp(-0.5 * (_wrapped_distance(dims.N_x, cx) / angle_spread) ** 2)
            pd = np.where(ell >= c0, np.exp(-(ell - c0) / delay_spread), 0.0)
        ang = np.outer(pz, px)
        omega += power * np.outer(ang.ravel(), pd)

    omega[omega < CLIP_REL * omega.max()] = 0.0
    omega *= total / omega.sum()
    return BeamPowerMap.from_omega(omega)


def realize_channel(pmap: BeamPowerMap, grids, rng):
    """One draw ``G = M * W`` and the matching space-frequency channel ``V G U_f^T``."""
    W = complex_normal(rng, pmap.m_root.shape)
    G = pmap.m_root * W
    H = grids.V @ G @ grids.U_f.T
    return G, H


def normalize_channel(H, target: float | None = None):
    """Scale ``H`` so that ``||H||_F^2 == M_r * M_p`` (or ``target``)."""
    H = np.asarray(H)
    target = H.size if target is None else target
    nrm = np.linalg.norm(H)
    if nrm == 0:
        return H.copy(), 1.0
    scale = np.sqrt(target) / nrm
    return H * scale, scale


@dataclass(frozen=True)
class ReceiveBatch:
    Y: np.ndarray          # T x M_r x M_p
    G_truth: np.ndarray    # T x N_r x Q*N_p
    H_truth: np.ndarray    # T x K x M_r x M_p
    sigma_z2: float
    seed: int

    @property
    def T(self) -> int:
        return self.Y.shape[0]


def stack_users(blocks_by_root, N_p: int) -> np.ndarray:
    """Stack per-root lists of per-user blocks into ``[G_1 ... G_Q]`` (width ``Q*N_p``)."""
    return np.concatenate([delay_block_embed(b, N_p) for b in blocks_by_root], axis=1)


def stacked_omega(maps, cfg, dims) -> np.ndarray:
    """Stacked ``Omega`` for per-user maps listed in (root, user) order."""
    return stack_users(_by_root([m.omega for m in maps], cfg.P_per_root), dims.N_p)


def _by_root(items, P_per_root):
    out, i = [], 0
    for P_q in P_per_root:
        out.append(list(items[i:i + P_q]))
        i += P_q
    if i != len(items):
        raise LayoutMismatch(f"{len(items)} users given, allocation has {i}")
    return out


def simulate_rx(maps, pilots, grids, cfg, dims, seed=None, sigma_z2=None) -> ReceiveBatch:
    """Draw ``T`` pilot symbols ``Y_t = sum_k H_k X_k + Z_t``.

    Each symbol is built twice, from the per-user sum and from the stacked
    form ``V G_t P + Z_t`` with the same noise, and the two must agree.
    Symbol ``t`` uses its own child of ``SeedSequence(seed)``.
    """
    seed = cfg.seed if seed is None else seed
    sigma_z2 = cfg.sigma_z2 if sigma_z2 is None else sigma_z2
    users = pilots.users()
    if len(maps) != len(users):
        raise LayoutMismatch(f"{len(maps)} maps for {len(users)} scheduled users")

    children = np.random.SeedSequence(seed).spawn(cfg.T)
    Y = np.empty((cfg.T, dims.M_r, cfg.M_p), dtype=complex)
    G_all = np.empty((cfg.T, dims.N_r, dims.Q * dims.N_p), dtype=complex)
    H_all = np.empty((cfg.T, len(users), dims.M_r, cfg.M_p), dtype=complex)
    for t, child in enumerate(children):
        rng = np.random.default_rng(child)
        G_users = []
        y_sum = np.zeros((dims.M_r, cfg.M_p), dtype=complex)
        for k, (pmap, qp) in enumerate(zip(maps, users)):
            G, H = realize_channel(pmap, grids, rng)
            G_users.append(G)
            H_all[t, k] = H
            y_sum += H * pilots.x_user[qp][None, :]
        Z = np.sqrt(sigma_z2) * complex_normal(rng, (dims.M_r, cfg.M_p))
        G_t = stack_users(_by_root(G_users, cfg.P_per_root), dims.N_p)
        y_stacked = grids.V @ G_t @ pilots.P_mat
        ref = max(np.linalg.norm(y_stacked), np.finfo(float).tiny)
        if np.linalg.norm(y_stacked - y_sum) > LAYOUT_RTOL * ref:
            raise LayoutMismatch("per-user and stacked receive models disagree")
        Y[t] = y_stacked + Z
        G_all[t] = G_t
    return ReceiveBatch(Y=Y, G_truth=G_all, H_truth=H_all, sigma_z2=float(sigma_z2), seed=seed)


def save_batch(path, batch: ReceiveBatch, cfg=None) -> None:
    """Write a batch as ``.npz``; the ``header`` entry is JSON with dims, seed and noise."""
    header = {
        "format": "beamstat-batch-1",
        "T": batch.T,
        "M_r": batch.Y.shape[1],
        "M_p": batch.Y.shape[2],
        "N_r": batch.G_truth.shape[1],
        "stacked_width": batch.G_truth.shape[2],
        "K": batch.H_truth.shape[1],
        "seed": int(batch.seed),
        "sigma_z2": batch.sigma_z2,
        "config": cfg.to_dict() if cfg is not None else None,
    }
    with open(path, "wb") as fh:
        np.savez(fh, header=np.array(json.dumps(header, sort_keys=True)),
                 Y=batch.Y, G_truth=batch.G_truth, H_truth=batch.H_truth)


def load_batch(path):
    with np.load(path, allow_pickle=False) as z:
        header = json.loads(str(z["header"]))
        batch = ReceiveBatch(Y=z["Y"], G_truth=z["G_truth"], H_truth=z["H_truth"],
                             sigma_z2=header["sigma_z2"], seed=header["seed"])
    return batch, header
