"""Structured forms of the pilot forward map ``G -> V G P``.

The vectorized dictionary ``kron(P^T, V)`` is never formed at run time;
products with it and weighted Gram matrices ``A diag(w) A^H`` are built
from ``V`` and ``P`` directly.
"""

from __future__ import annotations

import numpy as np

from .errors import ScaleTooLarge

# Largest M_r * M_p for which dense (M_r M_p)^2 systems are formed.
DENSE_SOLVE_CAP = 4096


def forward(G, V, P) -> np.ndarray:
    """``V G P`` for one matrix or a stack along the first axis."""
    return V @ G @ P


def adjoint(R, V, P) -> np.ndarray:
    """``V^H R P^H`` for one matrix or a stack along the first axis."""
    return V.conj().T @ R @ P.conj().T


def weighted_gram(V, P, D, cap: int = DENSE_SOLVE_CAP) -> np.ndarray:
    """``A diag(vec D) A^H`` for ``A = kron(P^T, V)`` in row-major vec order.

    Entry ``[(m, n), (m', n')]`` is
    ``sum_ij V[m,i] conj(V[m',i]) D[i,j] P[j,n] conj(P[j,n'])``.

    Raises
    ------
    ScaleTooLarge
        If ``M_r * M_p`` exceeds ``cap``.
    """
    M_r, M_p = V.shape[0], P.shape[1]
    n = M_r * M_p
    if n > cap:
        raise ScaleTooLarge(f"dense system of size {n} exceeds cap {cap}")
    J = P.shape[0]
    VV = np.einsum("mi,ki,ij->mkj", V, V.conj(), D, optimize=True).reshape(M_r * M_r, J)
    PP = (P[:, :, None] * P.conj()[:, None, :]).reshape(J, M_p * M_p)
    C = (VV @ PP).reshape(M_r, M_r, M_p, M_p)
    return C.transpose(0, 2, 1, 3).reshape(n, n)


def dense_dictionary(V, P, cap: int = DENSE_SOLVE_CAP) -> np.ndarray:
    """Explicit ``kron(P^T, V)``, acting on column-major ``vec(G)``."""
    if V.shape[0] * P.shape[1] > cap:
        raise ScaleTooLarge("dictionary too large to form densely")
    return np.kron(P.T, V)
