"""Steering vectors, oversampled DFT grids and delay-block permutations.

All grids use unit-modulus entries, so ``V_z`` equals ``sqrt(N_z)`` times
the first ``M_rz`` rows of the normalized DFT matrix (up to a row sign
pattern that cancels in every Gram product).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BlockOverflow

ANTENNA_SPACING = 0.5  # in wavelengths, both axes

# Dense N_r x N_r / N_p x N_p matrices are refused above this many entries.
DENSE_ENTRY_LIMIT = 40_000_000


def steering_vector(u, M: int, spacing: float = ANTENNA_SPACING) -> np.ndarray:
    """Array response of an ``M``-element half-wavelength ULA at directional cosine ``u``."""
    m = np.arange(M)
    return np.exp(-2j * np.pi * spacing * u * m)


steering_vector_z = steering_vector
steering_vector_x = steering_vector


def frequency_basis(tau, M_p: int, delta_f: float) -> np.ndarray:
    """Frequency response ``b_r(tau)`` of a single delay over ``M_p`` subcarriers."""
    m = np.arange(M_p)
    return np.exp(-2j * np.pi * delta_f * tau * m)


def angle_grid(N: int) -> np.ndarray:
    """Uniform half-open grid of ``N`` directional cosines on [-1, 1)."""
    return -1.0 + 2.0 * np.arange(N) / N


def delay_grid(N_p: int, delta_f: float) -> np.ndarray:
    return np.arange(N_p) / (N_p * delta_f)


def permutation(N: int, n: int) -> np.ndarray:
    """Cyclic shift ``[[0, I_{N-n}], [I_n, 0]]``; entry ``(i, (i+n) mod N)`` is one."""
    P = np.zeros((N, N))
    i = np.arange(N)
    P[i, (i + n) % N] = 1.0
    return P


def selector(rows: int, cols: int) -> np.ndarray:
    """The truncated identity ``I_{rows,cols}``."""
    return np.eye(rows, cols)


@dataclass(frozen=True)
class GridSet:
    V_z: np.ndarray
    V_x: np.ndarray
    V: np.ndarray
    U: np.ndarray
    U_f: np.ndarray
    delays: np.ndarray
    delta_f: float
    convention: str = "unit-modulus"

    @property
    def N_z(self) -> int:
        return self.V_z.shape[1]

    @property
    def N_x(self) -> int:
        return self.V_x.shape[1]

    @property
    def N_r(self) -> int:
        return self.V.shape[1]

    @property
    def N_p(self) -> int:
        return self.U.shape[1]

    @property
    def N_f(self) -> int:
        return self.U_f.shape[1]

    @property
    def M_r(self) -> int:
        return self.V.shape[0]

    @property
    def M_p(self) -> int:
        return self.U.shape[0]


def build_grids(cfg, dims) -> GridSet:
    V_z = np.stack([steering_vector(u, cfg.M_rz) for u in angle_grid(dims.N_z)], axis=1)
    V_x = np.stack([steering_vector(v, cfg.M_rx) for v in angle_grid(dims.N_x)], axis=1)
    delays = delay_grid(dims.N_p, cfg.delta_f)
    U = np.stack([frequency_basis(t, cfg.M_p, cfg.delta_f) for t in delays], axis=1)
    return GridSet(
        V_z=V_z,
        V_x=V_x,
        V=np.kron(V_z, V_x),
        U=U,
        U_f=U[:, : dims.N_f],
        delays=delays,
        delta_f=cfg.delta_f,
    )


def shift_delay(p: int, N_f: int, N_p: int, delta_f: float) -> float:
    """Cyclic-shift delay of the ``p``-th user (0-based) on a root.

    User ``p`` occupies delay columns ``[p*N_f, (p+1)*N_f)`` of the stacked
    layout, which needs the grid delay with 0-based index ``p*N_f``.
    """
    return p * N_f / (N_p * delta_f)


def delay_block_embed(G_blocks, N_p: int) -> np.ndarray:
    """Place per-user ``N_r x N_f`` blocks side by side in an ``N_r x N_p`` matrix."""
    G_blocks = [np.asarray(g) for g in G_blocks]
    if not G_blocks:
        raise ValueError("need at least one block")
    N_r, N_f = G_blocks[0].shape
    if len(G_blocks) * N_f > N_p:
        raise BlockOverflow(f"{len(G_blocks)} blocks of width {N_f} exceed N_p={N_p}")
    dtype = np.result_type(*G_blocks)
    out = np.zeros((N_r, N_p), dtype=dtype)
    for p, g in enumerate(G_blocks):
        out[:, p * N_f:(p + 1) * N_f] = g
    return out


def delay_block_embed_dense(G_blocks, N_p: int) -> np.ndarray:
    """Reference form: sum of ``G_p I_{N_f,N_p} Pi^{p N_f}`` with explicit matrices."""
    N_r, N_f = np.asarray(G_blocks[0]).shape
    if len(G_blocks) * N_f > N_p:
        raise BlockOverflow(f"{len(G_blocks)} blocks of width {N_f} exceed N_p={N_p}")
    S = selector(N_f, N_p)
    return sum(np.asarray(g) @ S @ permutation(N_p, p * N_f) for p, g in enumerate(G_blocks))
