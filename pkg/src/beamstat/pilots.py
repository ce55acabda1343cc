"""Zadoff-Chu pilot sequences, cyclic shifts and the stacked pilot matrix."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BadRoot
from .manifold import frequency_basis, shift_delay


def largest_prime_below(n: int) -> int:
    """Largest prime strictly smaller than ``n``."""
    for k in range(n - 1, 1, -1):
        if all(k % d for d in range(2, math.isqrt(k) + 1)):
            return k
    raise ValueError(f"no prime below {n}")


def zc_sequence(root: int, M_p: int) -> np.ndarray:
    """Zadoff-Chu root sequence of length ``M_p`` over the prime ``N_l < M_p``.

    The index runs to ``M_p - 1`` without cyclic extension, so for
    ``M_p > N_l`` the tail continues the quadratic phase.
    """
    N_l = largest_prime_below(M_p)
    if not (1 <= root < N_l) or math.gcd(root, N_l) != 1:
        raise BadRoot(f"root {root} invalid for N_l={N_l}")
    n = np.arange(M_p)
    return np.exp(-1j * np.pi * root * n * (n + 1) / N_l)


def default_roots(Q: int, M_p: int) -> list[int]:
    N_l = largest_prime_below(M_p)
    roots = [r for r in range(1, N_l) if math.gcd(r, N_l) == 1][:Q]
    if len(roots) < Q:
        raise BadRoot(f"only {len(roots)} roots available for N_l={N_l}")
    return roots


@dataclass(frozen=True)
class PilotSet:
    roots: tuple
    x_tilde: np.ndarray        # Q x M_p
    x_user: dict               # (q, p) -> length-M_p pilot
    P_mat: np.ndarray          # Q*N_p x M_p
    N_l: int

    @property
    def Q(self) -> int:
        return len(self.roots)

    def users(self):
        """(q, p) pairs in stacked order."""
        return sorted(self.x_user)


def build_pilot_matrix(cfg, dims, grids, roots=None, x_tilde=None) -> PilotSet:
    """Per-user pilots and ``P = [X_1^T U; ...; X_Q^T U]`` stacked by root.

    ``x_tilde`` overrides the ZC sequences (one row per root), which is
    handy for identity-pilot checks.
    """
    if x_tilde is None:
        roots = tuple(roots) if roots is not None else tuple(default_roots(cfg.Q, cfg.M_p))
        if len(set(roots)) != len(roots):
            raise BadRoot("roots must be distinct")
        x_tilde = np.stack([zc_sequence(r, cfg.M_p) for r in roots])
    else:
        x_tilde = np.atleast_2d(np.asarray(x_tilde, dtype=complex))
        roots = tuple(roots) if roots is not None else tuple(range(1, x_tilde.shape[0] + 1))

    x_user = {}
    for q, P_q in enumerate(cfg.P_per_root):
        for p in range(P_q):
            tau = shift_delay(p, dims.N_f, dims.N_p, cfg.delta_f)
            x_user[(q, p)] = x_tilde[q] * frequency_basis(tau, cfg.M_p, cfg.delta_f)

    P_mat = np.concatenate([grids.U.T * xq[None, :] for xq in x_tilde], axis=0)
    return PilotSet(
        roots=roots,
        x_tilde=x_tilde,
        x_user=x_user,
        P_mat=P_mat,
        N_l=largest_prime_below(cfg.M_p),
    )
