"""Beam-domain power estimation by KL-divergence moment matching.

Any observation of the form ``Y = A G B + Z`` with independent entries in
``G`` obeys the moment model

    E[|A^H Y B^H|^2] = T_left  Omega  T_right + N,

with ``T_left = |A^H A|^2`` and ``T_right = |B B^H|^2`` taken entrywise.
``estimate`` fits ``Omega = M * M`` to a sample moment by gradient descent
on the KL divergence. The only thing it needs from the model is an
operator ``X -> T_left X T_right``; dense and FFT-based versions exist.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import BeamPowerMap
from .errors import LayoutMismatch, NonpositiveModel

PHI_ZERO = 1e-30


def build_Tfactor(C) -> np.ndarray:
    """Entrywise power ``C * conj(C)`` of a Gram-type matrix, as a real array."""
    C = np.asarray(C)
    return (C * C.conj()).real


class DenseSandwich:
    """``X -> T_left @ X @ T_right`` with explicit matrices."""

    kind = "dense"

    def __init__(self, T_left, T_right):
        self.T_left = np.asarray(T_left, dtype=float)
        self.T_right = np.asarray(T_right, dtype=float)
        self._ones = None

    @property
    def shape(self):
        return (self.T_left.shape[0], self.T_right.shape[1])

    def __call__(self, X):
        return self.T_left @ X @ self.T_right

    @property
    def ones_term(self):
        if self._ones is None:
            self._ones = self(np.ones(self.shape))
        return self._ones


@dataclass(frozen=True)
class MomentObservation:
    phi: np.ndarray
    T_used: int
    noise_floor: np.ndarray   # scalar (0-d) or full matrix

    @property
    def noise(self) -> np.ndarray:
        return np.broadcast_to(self.noise_floor, self.phi.shape)


def noise_floor(A, B, sigma_z2):
    """Noise contribution ``sigma^2 * ||A[:, i]||^2 * ||B[j, :]||^2`` to the moment model."""
    a = np.sum(np.abs(A) ** 2, axis=0)
    b = np.sum(np.abs(B) ** 2, axis=1)
    return sigma_z2 * np.outer(a, b)


def bilinear_moment(Ys, A, B) -> np.ndarray:
    """Sample mean of ``|A^H Y_t B^H|^2`` over the stack ``Ys``."""
    Ys = np.asarray(Ys)
    Z = A.conj().T[None] @ Ys @ B.conj().T[None]
    return np.mean((Z * Z.conj()).real, axis=0)


def accumulate_phi(batch, grids, pilots) -> MomentObservation:
    """Matched-filter power ``(1/T) sum_t |V^H Y_t P^H|^2`` of a receive batch.

    For unit-modulus grids and pilots the noise floor is the constant
    ``M_r * M_p * sigma_z2``.
    """
    phi = bilinear_moment(batch.Y, grids.V, pilots.P_mat)
    level = grids.M_r * grids.M_p * batch.sigma_z2
    return MomentObservation(phi=phi, T_used=batch.T, noise_floor=np.asarray(level, dtype=float))


def dense_operator(grids, pilots) -> DenseSandwich:
    V, P = grids.V, pilots.P_mat
    return DenseSandwich(build_Tfactor(V.conj().T @ V), build_Tfactor(P @ P.conj().T))


def _model(M, obs, op):
    model = op(M * M) + obs.noise_floor
    if np.any(model <= 0):
        raise NonpositiveModel("moment model has entries <= 0")
    return model


def _kl(phi, model):
    pos = phi > PHI_ZERO
    lr = np.zeros_like(phi)
    lr[pos] = phi[pos] * np.log(phi[pos] / model[pos])
    return float(lr.sum() + model.sum() - phi[pos].sum())


def kl_objective(M, obs, op) -> float:
    """KL divergence between ``phi`` and ``op(M*M) + N`` (with ``0 log 0 = 0``)."""
    return _kl(obs.phi, _model(M, obs, op))


def quotient(obs, model) -> np.ndarray:
    q = np.zeros_like(model)
    pos = obs.phi > PHI_ZERO
    q[pos] = obs.phi[pos] / model[pos]
    return q


def kl_gradient(M, obs, op) -> np.ndarray:
    """``2 * op(1 - Phi / model) * M``."""
    model = _model(M, obs, op)
    return 2.0 * (op.ones_term - op(quotient(obs, model))) * M


@dataclass
class EstimatorState:
    M_est: np.ndarray
    step: float
    iter: int
    objective: list = field(default_factory=list)
    converged: bool = False

    @property
    def omega_est(self) -> np.ndarray:
        return self.M_est * self.M_est


def default_step(op) -> float:
    """Half the reciprocal of the largest entry of ``T_left 1 T_right``.

    With this step the first trial update is ``M <- M * op(QuotQ) / c``
    for constant ``c``, a multiplicative fixed-point step.
    """
    return 0.5 / float(np.max(op.ones_term))


def estimate(obs, op, D: int = 200, delta0=None, delta_min=None, alpha: float = 0.5,
             M0=None, callback=None) -> EstimatorState:
    """Gradient descent on ``M`` with step halving on failure.

    Starts from ``Omega0 = Phi / Phi.size``. Every iteration first tries
    ``delta0``; while the objective does not drop the step is multiplied by
    ``alpha``. Stops after ``D`` iterations or once no step above
    ``delta_min`` gives a decrease.

    Parameters
    ----------
    obs : MomentObservation
    op : DenseSandwich or FastSandwich
        Applies ``X -> T_left X T_right``.
    D : int
        Iteration budget.
    delta0, delta_min, alpha : float, optional
        Line-search constants. ``delta0`` defaults to ``default_step(op)``
        and ``delta_min`` to ``1e-12 * delta0``.
    M0 : ndarray, optional
        Starting point instead of the scaled ``sqrt(Phi)``.
    callback : callable, optional
        Called as ``callback(d, M, f)`` after every iteration.

    Returns
    -------
    EstimatorState
        ``objective`` holds the initial value followed by one entry per
        accepted step.
    """
    delta_start = default_step(op) if delta0 is None else float(delta0)
    delta_min = 1e-12 * delta_start if delta_min is None else float(delta_min)
    if not (delta_start > delta_min > 0):
        raise ValueError("need delta0 > delta_min > 0")
    if not (0 < alpha < 1):
        raise ValueError("alpha must lie in (0, 1)")
    if D < 1:
        raise ValueError("D must be >= 1")

    M = np.sqrt(obs.phi / obs.phi.size) if M0 is None else np.array(M0, dtype=float)
    model = _model(M, obs, op)
    f = _kl(obs.phi, model)
    trace = [f]
    d = 0
    delta = delta_start
    while d < D and delta > delta_min:
        delta = delta_start
        grad = 2.0 * (op.ones_term - op(quotient(obs, model))) * M
        while delta > delta_min:
            M_new = M - delta * grad
            model_new = _model(M_new, obs, op)
            f_new = _kl(obs.phi, model_new)
            if f_new < f:
                M, model, f = M_new, model_new, f_new
                trace.append(f)
                break
            delta *= alpha
        d += 1
        if callback is not None:
            callback(d, M, f)
    return EstimatorState(M_est=M, step=delta, iter=d, objective=trace,
                          converged=delta <= delta_min)


def split_per_user(omega_stacked, dims, P_per_root) -> list:
    """Cut the stacked ``N_r x Q*N_p`` map into per-user ``N_r x N_f`` maps."""
    omega_stacked = np.asarray(omega_stacked)
    if omega_stacked.shape != (dims.N_r, len(P_per_root) * dims.N_p):
        raise LayoutMismatch(f"stacked map has shape {omega_stacked.shape}")
    out = []
    for q, P_q in enumerate(P_per_root):
        if P_q * dims.N_f > dims.N_p:
            raise LayoutMismatch(f"root {q}: {P_q} users do not fit")
        for p in range(P_q):
            c0 = q * dims.N_p + p * dims.N_f
            out.append(BeamPowerMap.from_omega(omega_stacked[:, c0:c0 + dims.N_f]))
    return out


class BilinearProblem:
    """Generic ``Y = A G B + Z`` power estimation problem."""

    def __init__(self, A, B, sigma_z2):
        self.A = np.asarray(A)
        self.B = np.asarray(B)
        self.sigma_z2 = float(sigma_z2)

    def observe(self, Ys) -> MomentObservation:
        Ys = np.asarray(Ys)
        return MomentObservation(phi=bilinear_moment(Ys, self.A, self.B), T_used=len(Ys),
                                 noise_floor=noise_floor(self.A, self.B, self.sigma_z2))

    def operator(self) -> DenseSandwich:
        A, B = self.A, self.B
        return DenseSandwich(build_Tfactor(A.conj().T @ A), build_Tfactor(B @ B.conj().T))

    def solve(self, Ys, **opts) -> EstimatorState:
        return estimate(self.observe(Ys), self.operator(), **opts)


def estimate_flat(Y_batch, V_r, V_t, X_k, sigma_z2, **opts) -> BeamPowerMap:
    """Angle-domain power map of user ``k`` in a narrowband MIMO uplink.

    ``Y_batch`` stacks slots ``Y_m`` (``M_r x T_pilot``); user ``k`` sends
    ``X_k`` (``M_t x T_pilot``), orthogonal to the other users' pilots.
    """
    B = np.asarray(V_t).T @ np.asarray(X_k)
    state = BilinearProblem(V_r, B, sigma_z2).solve(Y_batch, **opts)
    return BeamPowerMap.from_omega(state.omega_est)
