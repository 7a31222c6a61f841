"""Circulant (convolutional) denoiser learning on 1-d circular signals.

A circular filter defines a circulant weight matrix W_ij = w_((j-i) mod N),
diagonal in the DFT basis, so full-width training decouples per Fourier
mode exactly like the fully-connected case decouples per eigenmode, with
every rate multiplied by N (weight sharing).  Local filters instead do
ridge regression in patch space: the K x K shift-averaged patch
covariance governs the dynamics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "CirculantDenoiser",
    "FourierModeSet",
    "PatchCovariance",
    "dft_mode_variance",
    "full_width_gamma_trajectory",
    "patch_covariance",
    "patch_filter_trajectory",
    "filter_to_gammas",
    "circulant_matrix",
]


@dataclass(frozen=True)
class CirculantDenoiser:
    """Filter of half-width r on a length-N circle; taps ordered -r..r."""

    signal_len: int
    half_width: int
    filter: np.ndarray  # (2r+1,)
    noise_scale: float = 1.0

    def __post_init__(self) -> None:
        taps = np.asarray(self.filter, dtype=float)
        object.__setattr__(self, "filter", taps)
        k = 2 * self.half_width + 1
        if self.half_width < 0:
            raise ValueError("half_width must be >= 0")
        if taps.shape != (k,):
            raise ValueError(f"filter must have odd length {k} (= 2r+1)")
        if k > self.signal_len:
            raise ValueError("filter cannot be wider than the signal")
        if self.noise_scale <= 0:
            raise ValueError("noise scale must be positive")

    @property
    def width(self) -> int:
        return 2 * self.half_width + 1

    def offsets(self) -> np.ndarray:
        return np.arange(-self.half_width, self.half_width + 1)

    def dense(self) -> np.ndarray:
        return circulant_matrix(self.filter, self.offsets(), self.signal_len)


@dataclass(frozen=True)
class FourierModeSet:
    """Fourier multipliers of a real filter, optionally with the data's
    per-mode variances alongside."""

    gammas: np.ndarray  # (N,) complex
    mode_vars: np.ndarray | None = None  # (N,) nonnegative

    def __post_init__(self) -> None:
        g = np.asarray(self.gammas, dtype=complex)
        object.__setattr__(self, "gammas", g)
        n = g.shape[0]
        rolled = np.conj(g[(-np.arange(n)) % n])
        if np.max(np.abs(g - rolled)) > 1e-9 * max(1.0, np.max(np.abs(g))):
            raise ValueError("gammas of a real filter must be conjugate-symmetric")
        if self.mode_vars is not None:
            mv = np.asarray(self.mode_vars, dtype=float)
            object.__setattr__(self, "mode_vars", mv)
            if np.any(mv < -1e-12):
                raise ValueError("mode variances must be nonnegative")


@dataclass(frozen=True)
class PatchCovariance:
    """Shift-averaged K x K covariance of circular length-K windows."""

    size: int
    matrix: np.ndarray

    def __post_init__(self) -> None:
        mat = np.asarray(self.matrix, dtype=float)
        object.__setattr__(self, "matrix", mat)
        if mat.shape != (self.size, self.size):
            raise ValueError("matrix must be size x size")
        if np.max(np.abs(mat - mat.T)) > 1e-10 * max(1.0, np.max(np.abs(mat))):
            raise ValueError("patch covariance must be symmetric")
        if np.linalg.eigvalsh(mat).min() < -1e-10:
            raise ValueError("patch covariance must be PSD")


def circulant_matrix(taps, offsets, n) -> np.ndarray:
    """Dense W with W[i, (i + o) mod n] = tap at offset o."""
    w = np.zeros((n, n))
    idx = np.arange(n)
    for o, t in zip(np.asarray(offsets, int), np.asarray(taps, float)):
        w[idx, (idx + o) % n] = t
    return w


def dft_mode_variance(sigma_mat: np.ndarray) -> np.ndarray:
    """Fourier-mode variances diag(F* Sigma F), computed with FFTs.

    For real symmetric Sigma the diagonal is real and nonnegative; the
    imaginary residue is checked against 1e-10 and discarded.
    """
    sigma_mat = np.asarray(sigma_mat, dtype=float)
    n = sigma_mat.shape[0]
    if sigma_mat.shape != (n, n):
        raise ValueError("covariance must be square")
    if np.max(np.abs(sigma_mat - sigma_mat.T)) > 1e-8 * max(1.0, np.max(np.abs(sigma_mat))):
        raise ValueError("covariance must be symmetric")
    # diag(F* Sigma F)_k = (1/N) sum_mn Sigma_mn e^{2 pi i k (m - n) / N}
    inner = np.fft.fft(sigma_mat, axis=1)  # sum_n Sigma_mn e^{-2 pi i k n / N}
    full = np.fft.ifft(inner, axis=0)  # (1/N) sum_m (...) e^{+2 pi i k m / N}
    diag = np.diagonal(full)
    if np.max(np.abs(diag.imag)) > 1e-10 * max(1.0, np.max(np.abs(diag.real))):
        raise ValueError("imaginary residue exceeds tolerance; input not symmetric?")
    return np.clip(diag.real, 0.0, None)


def full_width_gamma_trajectory(mode_var, gamma0, sigma, eta, n, tau):
    """Fourier multiplier of the full-width filter under gradient flow.

    gamma(tau) = gamma* + (gamma0 - gamma*) exp(-2 N eta (sigma^2 + S_kk) tau)
    with gamma* = S_kk / (sigma^2 + S_kk); broadcasts over its arguments.
    """
    mode_var, gamma0, sigma, tau = np.broadcast_arrays(
        np.asarray(mode_var, float),
        np.asarray(gamma0, float),
        np.asarray(sigma, float),
        np.asarray(tau, float),
    )
    gamma_star = mode_var / (sigma**2 + mode_var)
    rate = 2.0 * n * eta * (sigma**2 + mode_var)
    return gamma_star + (gamma0 - gamma_star) * np.exp(-rate * tau)


def patch_covariance(sigma_mat: np.ndarray, r: int) -> PatchCovariance:
    """Shift-averaged covariance chi[a - b] of circular K = 2r+1 windows."""
    sigma_mat = np.asarray(sigma_mat, dtype=float)
    n = sigma_mat.shape[0]
    k = 2 * r + 1
    if k > n:
        raise ValueError("patch must fit in the signal (2r+1 <= N)")
    idx = np.arange(n)
    chi = {}
    for o in range(-(k - 1), k):
        chi[o] = sigma_mat[idx, (idx + o) % n].mean()
    offs = np.arange(-r, r + 1)
    mat = np.array([[chi[int(b - a)] for b in offs] for a in offs])
    return PatchCovariance(k, 0.5 * (mat + mat.T))


def patch_filter_trajectory(pc: PatchCovariance, sigma, eta, n, w0, tau_grid):
    """Local-filter flow w(tau) = w* + exp(-2 N eta tau (sigma^2 I + S_p))(w0 - w*).

    The matrix exponential is evaluated through the eigendecomposition of
    sigma^2 I + Sigma_patch; w* = (sigma^2 I + Sigma_patch)^-1 Sigma_patch e0
    with e0 the one-hot at the filter center.  Returns (w_path, w_star)
    with w_path[i] the filter at tau_grid[i].
    """
    tau_grid = np.atleast_1d(np.asarray(tau_grid, float))
    w0 = np.asarray(w0, float)
    k = pc.size
    if w0.shape != (k,):
        raise ValueError("w0 must match the patch size")
    a = sigma**2 * np.eye(k) + pc.matrix
    e0 = np.zeros(k)
    e0[k // 2] = 1.0
    w_star = np.linalg.solve(a, pc.matrix @ e0)
    evals, evecs = np.linalg.eigh(a)
    coeff = evecs.T @ (w0 - w_star)
    decay = np.exp(-2.0 * n * eta * tau_grid[:, None] * evals[None, :])
    path = w_star[None, :] + (decay * coeff[None, :]) @ evecs.T
    return path, w_star


def filter_to_gammas(cd: CirculantDenoiser) -> FourierModeSet:
    """Fourier multipliers gamma_l = sum_k e^{-2 pi i k l / N} w_k.

    Only the 2r+1 stored taps contribute; the inverse transform recovers
    the filter exactly when the width equals the signal length.
    """
    n = cd.signal_len
    embedded = np.zeros(n)
    for o, t in zip(cd.offsets(), cd.filter):
        embedded[o % n] += t
    return FourierModeSet(np.fft.fft(embedded))
