"""Linear MMSE channel estimation with a diagonal beam-domain prior.

With independent zero-mean Gaussian coefficients of variance ``omega``,

    g_hat = D A^H (A D A^H + sigma^2 I)^{-1} y,   D = diag(omega),

for ``y = vec(V G P) + z``. The system is solved densely at desk scale or
by conjugate gradients on the ``M_r x M_p`` receive grid otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from .errors import SolverDiverged
from .linops import DENSE_SOLVE_CAP, adjoint, forward, weighted_gram

DB_FLOOR = -300.0
CG_RTOL = 1e-12        # target for the iterative solve
CG_FAIL_RTOL = 1e-8    # residual above this counts as divergence


def to_db(x, base: float = 10.0) -> float:
    """``10 * log_base(x)`` with a floor of -300 dB for ``x <= 0``.

    ``base=2`` reproduces values printed with a base-2 logarithm.
    """
    if x <= 0:
        return DB_FLOOR
    val = 10.0 * np.log(x) / np.log(base)
    return float(max(val, DB_FLOOR))


@dataclass
class MmseProblem:
    omega_stacked: np.ndarray     # N_r x Q*N_p prior variances
    V: np.ndarray
    P: np.ndarray
    sigma_z2: float
    solver: str = "auto"          # "direct", "cg" or "auto"
    cap: int = DENSE_SOLVE_CAP
    max_iter: int = 2000

    def __post_init__(self):
        self.omega_stacked = np.asarray(self.omega_stacked, dtype=float)
        if np.any(self.omega_stacked < 0):
            raise ValueError("prior variances must be >= 0")
        if self.solver not in ("direct", "cg", "auto"):
            raise ValueError(f"unknown solver {self.solver!r}")

    @property
    def use_direct(self) -> bool:
        if self.solver == "auto":
            return self.V.shape[0] * self.P.shape[1] <= self.cap
        return self.solver == "direct"

    def system(self, R) -> np.ndarray:
        """``(A D A^H + sigma^2 I) r`` on the receive grid."""
        return forward(self.omega_stacked * adjoint(R, self.V, self.P), self.V, self.P) + self.sigma_z2 * R

    def solve(self, Y) -> np.ndarray:
        """``(A D A^H + sigma^2 I)^{-1} y`` for a stack of ``M_r x M_p`` symbols."""
        Y = np.asarray(Y, dtype=complex)
        T, M_r, M_p = Y.shape
        n = M_r * M_p
        if self.use_direct:
            C = weighted_gram(self.V, self.P, self.omega_stacked, cap=self.cap)
            C[np.diag_indices_from(C)] += self.sigma_z2
            z = np.linalg.solve(C, Y.reshape(T, n).T)
            return z.T.reshape(T, M_r, M_p)

        op = LinearOperator((n, n), dtype=complex,
                            matvec=lambda v: self.system(v.reshape(M_r, M_p)).ravel())
        out = np.empty_like(Y)
        for t in range(T):
            y = Y[t].ravel()
            z, info = cg(op, y, rtol=CG_RTOL, atol=0.0, maxiter=self.max_iter)
            res = np.linalg.norm(op.matvec(z) - y)
            if res > CG_FAIL_RTOL * max(np.linalg.norm(y), np.finfo(float).tiny):
                raise SolverDiverged(f"CG stopped with info={info}, residual {res:.3e}")
            out[t] = z.reshape(M_r, M_p)
        return out

    def estimate_coefficients(self, Y) -> np.ndarray:
        """``g_hat`` per symbol; entries with zero prior variance are exactly 0."""
        Y = np.asarray(Y, dtype=complex)
        if Y.ndim == 2:
            Y = Y[None]
        Z = self.solve(Y)
        return self.omega_stacked * adjoint(Z, self.V, self.P)


def user_channels(G_hat, grids, dims, P_per_root) -> np.ndarray:
    """``H_k = V G_k U_f^T`` for every scheduled user; shape ``T x K x M_r x M_p``."""
    G_hat = np.asarray(G_hat)
    T = G_hat.shape[0]
    K = sum(P_per_root)
    out = np.empty((T, K, grids.M_r, grids.M_p), dtype=complex)
    k = 0
    for q, P_q in enumerate(P_per_root):
        for p in range(P_q):
            c0 = q * dims.N_p + p * dims.N_f
            out[:, k] = grids.V @ G_hat[:, :, c0:c0 + dims.N_f] @ grids.U_f.T
            k += 1
    return out


def mmse_estimate(Y, omega_stacked, grids, pilots, sigma_z2, dims, P_per_root,
                  solver: str = "auto") -> np.ndarray:
    """Per-user MMSE channel estimates ``T x K x M_r x M_p`` for received symbols ``Y``."""
    prob = MmseProblem(omega_stacked, grids.V, pilots.P_mat, sigma_z2, solver=solver)
    G_hat = prob.estimate_coefficients(Y)
    return user_channels(G_hat, grids, dims, P_per_root)


def normalize_pair(H_hat, H_truth):
    """Scale every truth realization to ``||H||_F^2 = M_r M_p``, estimate alongside."""
    H_hat = np.asarray(H_hat)
    H_truth = np.asarray(H_truth)
    n = H_truth.shape[-2] * H_truth.shape[-1]
    nrm2 = np.sum(np.abs(H_truth) ** 2, axis=(-2, -1), keepdims=True)
    scale = np.where(nrm2 > 0, np.sqrt(n / np.where(nrm2 > 0, nrm2, 1.0)), 1.0)
    return H_hat * scale, H_truth * scale


def mse_metric(H_hat, H_truth, base: float = 10.0) -> float:
    """Mean squared Frobenius error over all leading axes, in dB.

    ``H_truth`` is expected to be normalized already (see ``normalize_pair``).
    """
    H_hat = np.asarray(H_hat)
    H_truth = np.asarray(H_truth)
    if H_hat.shape != H_truth.shape:
        raise ValueError(f"shape mismatch {H_hat.shape} vs {H_truth.shape}")
    err = np.sum(np.abs(H_hat - H_truth) ** 2, axis=(-2, -1))
    return to_db(float(np.mean(err)), base)
