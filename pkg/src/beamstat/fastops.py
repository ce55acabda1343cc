"""Circulant structure of ``T_a`` and ``T_f`` and FFT evaluation of ``T_a X T_f``.

With an oversampled DFT grid ``A`` (``M x N``, unit-modulus) and a diagonal
``D = diag(d)``, the matrix ``(A^H D A) * conj(A^H D A)`` is circulant with
first column ``|c|^2``, ``c = A^H d``. Its eigenvalues are ``fft(|c|^2)``.
``T_a`` is the Kronecker product of two such matrices, and each ``Q x Q``
block of ``T_f`` is one of them, so ``T_a X T_f`` costs a few FFTs.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .errors import BadSize

IMAG_RTOL = 1e-10


def _circulant_eigs(d, N: int) -> np.ndarray:
    d = np.asarray(d, dtype=complex)
    if d.size > N:
        raise BadSize(f"vector of length {d.size} does not fit grid size {N}")
    c = N * np.fft.ifft(d, n=N)          # A^H d for the unnormalized grid
    return np.fft.fft((c * c.conj()).real)


def circulant_from_eigs(lam) -> np.ndarray:
    """Dense circulant ``F^{-1} diag(lam) F`` (numpy FFT convention)."""
    lam = np.asarray(lam)
    N = lam.size
    col = np.fft.ifft(lam)
    idx = (np.arange(N)[:, None] - np.arange(N)[None, :]) % N
    C = col[idx]
    return C.real if np.allclose(C.imag, 0, atol=1e-12 * max(1.0, np.abs(C).max())) else C


def normalized_form_factor(d, N: int) -> np.ndarray:
    """Eigenvalue diagonal in the orthonormal-DFT form, without calibration.

    ``(1/N) F_N((F_N^H d) * conj(F_N^H d))`` with orthonormal ``F_N``.
    Under unit-modulus grids this differs from the true spectrum by a
    size-dependent power of ``N``; kept for comparison only.
    """
    dt = np.zeros(N, dtype=complex)
    dt[: len(d)] = d
    c = np.fft.ifft(dt, norm="ortho")
    return np.fft.fft((c * c.conj()).real, norm="ortho") / N


@functools.lru_cache(maxsize=None)
def calibrate_scale(N: int = 6, M: int = 3) -> float:
    """Scalar that makes the FFT eigenvalues reproduce a dense reference.

    Computed once at a tiny size. The eigenvalue formula above is exact
    under the unit-modulus convention, so the result is 1 to rounding;
    any other value would signal a convention error.
    """
    rng = np.random.default_rng(12345)
    d = rng.standard_normal(M) + 1j * rng.standard_normal(M)
    k = np.arange(N)
    A = np.exp(-2j * np.pi * np.outer(np.arange(M), k) / N)
    G = A.conj().T @ (d[:, None] * A)
    dense = (G * G.conj()).real
    fast = circulant_from_eigs(_circulant_eigs(d, N)).real
    return float(np.vdot(fast.ravel(), dense.ravel()) / np.vdot(fast.ravel(), fast.ravel()))


def circulant_factor(d, N: int) -> np.ndarray:
    """Eigenvalues of the circulant ``(A^H D A) * conj(A^H D A)`` on an ``N``-point grid."""
    return calibrate_scale() * _circulant_eigs(d, N)


@dataclass(frozen=True)
class SpectralFactors:
    lambda_z: np.ndarray          # N_z, real
    lambda_x: np.ndarray          # N_x, real
    sigma_blocks: np.ndarray      # Q x Q x N_p, complex off the block diagonal
    scale: dict

    @property
    def Q(self) -> int:
        return self.sigma_blocks.shape[0]

    @property
    def N_z(self) -> int:
        return self.lambda_z.size

    @property
    def N_x(self) -> int:
        return self.lambda_x.size

    @property
    def N_p(self) -> int:
        return self.sigma_blocks.shape[2]

    def dense_Ta(self) -> np.ndarray:
        return np.kron(circulant_from_eigs(self.lambda_z), circulant_from_eigs(self.lambda_x)).real

    def dense_Tf(self) -> np.ndarray:
        Q = self.Q
        return np.block([[circulant_from_eigs(self.sigma_blocks[a, b]).real for b in range(Q)]
                         for a in range(Q)])


def build_factors(grids, pilots) -> SpectralFactors:
    """Spectra of ``T_a`` (from the array sizes) and ``T_f`` (from the ZC sequences).

    Block ``(q1, q2)`` of ``T_f`` is ``(U^T X_q1 X_q2^H U^*) * conj(.)``,
    which equals the circulant built from ``x_q2 * conj(x_q1)``.
    """
    M_z, N_z = grids.V_z.shape
    M_x, N_x = grids.V_x.shape
    N_p = grids.N_p
    lam_z = circulant_factor(np.ones(M_z), N_z).real
    lam_x = circulant_factor(np.ones(M_x), N_x).real
    xt = pilots.x_tilde
    Q = xt.shape[0]
    sig = np.empty((Q, Q, N_p), dtype=complex)
    for a in range(Q):
        for b in range(Q):
            sig[a, b] = circulant_factor(xt[b] * xt[a].conj(), N_p)
    for a in range(Q):
        sig[a, a] = sig[a, a].real
    return SpectralFactors(lambda_z=lam_z, lambda_x=lam_x, sigma_blocks=sig,
                           scale={"circulant": calibrate_scale()})


def fast_sandwich(X, factors: SpectralFactors) -> np.ndarray:
    """``T_a @ X @ T_f`` for a real ``N_r x Q*N_p`` matrix using only FFTs.

    Rows of ``X`` are reshaped to the ``N_z x N_x`` angle grid so ``T_a``
    acts as a 2D circular convolution; columns split into ``Q`` delay
    blocks and ``T_f`` mixes them in the frequency domain.
    """
    f = factors
    Q, N_p = f.Q, f.N_p
    X = np.asarray(X, dtype=float)
    Z = X.reshape(f.N_z, f.N_x, Q, N_p)
    Zf = np.fft.fftn(Z, axes=(0, 1, 3))
    Zf *= (f.lambda_z[:, None] * f.lambda_x[None, :])[:, :, None, None]
    if Q == 1:
        Wf = Zf * f.sigma_blocks[0, 0].conj()[None, None, None, :]
    else:
        # right-multiplication by a circulant uses the conjugate spectrum
        Wf = np.einsum("zxqn,qjn->zxjn", Zf, f.sigma_blocks.conj())
    W = np.fft.ifftn(Wf, axes=(0, 1, 3))
    re = W.real
    if np.abs(W.imag).max(initial=0.0) > IMAG_RTOL * max(np.abs(re).max(initial=0.0), 1e-300):
        raise ArithmeticError("imaginary residue in fast sandwich exceeds tolerance")
    return re.reshape(X.shape)


def fast_model_apply(omega, factors, noise_floor) -> np.ndarray:
    return fast_sandwich(omega, factors) + noise_floor


class FastSandwich:
    """Drop-in replacement for ``DenseSandwich`` backed by ``fast_sandwich``."""

    kind = "fast"

    def __init__(self, factors: SpectralFactors):
        self.factors = factors
        self._ones = None

    @property
    def shape(self):
        f = self.factors
        return (f.N_z * f.N_x, f.Q * f.N_p)

    def __call__(self, X):
        return fast_sandwich(X, self.factors)

    @property
    def ones_term(self):
        if self._ones is None:
            self._ones = self(np.ones(self.shape))
        return self._ones


def fast_operator(grids, pilots) -> FastSandwich:
    return FastSandwich(build_factors(grids, pilots))
