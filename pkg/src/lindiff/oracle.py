"""Brute-force reference implementations used only to validate closed forms.

Nothing here touches the closed-form code paths: losses and gradients are
assembled directly from the input/target moments of each training
objective, and trajectories come from integrating those raw gradients on
full matrices.  Slowness is fine; independence is the point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import LossVariant
from .gaussian import DataMoments
from .integrate import rk4_path, rk45_path

__all__ = [
    "OdeSolveConfig",
    "variant_moments",
    "loss_value",
    "loss_gradients",
    "gradient_flow_full",
    "discrete_gd_full",
    "mc_dsm_loss",
    "dense_dft_diag",
    "heun_affine_dense",
]


@dataclass(frozen=True)
class OdeSolveConfig:
    method: str = "rk4-fixed"  # or "rk45-adaptive"
    substeps: int = 64
    rtol: float = 1e-10
    atol: float = 1e-13
    max_steps: int = 2_000_000

    def __post_init__(self) -> None:
        if self.method not in ("rk4-fixed", "rk45-adaptive"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.substeps < 1 or self.rtol <= 0 or self.atol <= 0:
            raise ValueError("positive step/tolerance required")


def variant_moments(variant: LossVariant, moments: DataMoments, s: float):
    """Input/target moments (mu_x, mu_y, Sxx, Syx, Syy) of a loss variant."""
    mu, cov = moments.mean, moments.covariance
    d = moments.dim
    eye = np.eye(d)
    if variant.tag == "EDM":
        return mu, mu, cov + s * s * eye, cov, cov
    if variant.tag == "FlowMatch":
        t = s
        sxx = t * t * cov + (1 - t) ** 2 * eye
        return t * mu, mu, sxx, t * cov - (1 - t) * eye, cov + eye
    a, st = variant.alpha(s), variant.sigma_t(s)
    sxx = a * a * cov + st * st * eye
    if variant.tag == "XPred":
        return a * mu, mu, sxx, a * cov, cov
    if variant.tag == "EpsPred":
        return a * mu, np.zeros(d), sxx, st * eye, eye
    # VPred: target alpha*eps - sigma*x
    return a * mu, -st * mu, sxx, a * st * (eye - cov), a * a * eye + st * st * cov


def loss_value(w, b, mm) -> float:
    """Full-batch quadratic loss E |W x + b - y|^2 from the moment tuple."""
    mu_x, mu_y, sxx, syx, syy = mm
    second_x = sxx + np.outer(mu_x, mu_x)
    cross = syx + np.outer(mu_y, mu_x)
    return float(
        np.einsum("ij,ij->", w @ second_x, w)
        - 2.0 * np.einsum("ij,ij->", cross, w)
        + b @ b
        + 2.0 * b @ (w @ mu_x - mu_y)
        + np.trace(syy)
        + mu_y @ mu_y
    )


def loss_gradients(w, b, mm):
    """Analytic gradients of loss_value; cross-checked by finite differences."""
    mu_x, mu_y, sxx, syx, syy = mm
    grad_b = 2.0 * (w @ mu_x + b - mu_y)
    grad_w = 2.0 * (w @ sxx - syx) + np.outer(grad_b, mu_x)
    return grad_w, grad_b


def _circulant_from_taps(taps, offsets, n):
    w = np.zeros((n, n))
    for o, t in zip(offsets, taps):
        idx = np.arange(n)
        w[idx, (idx + o) % n] = t
    return w


def _sum_over_offsets(mat, offsets, n):
    idx = np.arange(n)
    return np.array([mat[idx, (idx + o) % n].sum() for o in offsets])


def gradient_flow_full(
    moments: DataMoments,
    s: float,
    eta: float,
    w0: np.ndarray,
    b0: np.ndarray,
    tau_grid,
    variant: LossVariant = LossVariant.edm(),
    parametrization: str = "one-layer",
    half_width: int | None = None,
    solve: OdeSolveConfig = OdeSolveConfig(),
):
    """Integrate exact full-batch gradient flow on raw parameter matrices.

    parametrization: 'one-layer' (state W, b), 'two-layer-symmetric'
    (state P with W = P P^T, plus b), 'circulant' (state = N filter taps),
    or 'patch' (taps restricted to |offset| <= half_width).
    Returns (tau_grid, Ws, bs) with Ws[i] the dense weight matrix.
    """
    tau_grid = np.asarray(tau_grid, float)
    mm = variant_moments(variant, moments, s)
    d = moments.dim
    rate0 = 2.0 * eta * float(np.linalg.eigvalsh(mm[2] + np.outer(mm[0], mm[0])).max())

    if parametrization == "one-layer":
        rate = rate0

        def rhs(_t, y):
            w, b = y[:-1], y[-1]
            gw, gb = loss_gradients(w, b, mm)
            return -eta * np.vstack([gw, gb[None, :]])

        y0 = np.vstack([np.asarray(w0, float), np.asarray(b0, float)[None, :]])
        path = _solve(rhs, y0, tau_grid, rate, solve)
        return tau_grid, path[:, :-1, :], path[:, -1, :]

    if parametrization == "two-layer-symmetric":
        p0 = np.asarray(w0, float)  # here w0 is the factor P(0)
        norm0 = float(np.linalg.norm(p0, 2)) ** 2
        rate = 6.0 * rate0 * max(1.0, norm0)

        def rhs(_t, y):
            p, b = y[:-1], y[-1]
            gw, gb = loss_gradients(p @ p.T, b, mm)
            gp = (gw + gw.T) @ p
            return -eta * np.vstack([gp, gb[None, :]])

        y0 = np.vstack([p0, np.asarray(b0, float)[None, :]])
        path = _solve(rhs, y0, tau_grid, rate, solve)
        ws = np.einsum("tij,tkj->tik", path[:, :-1, :], path[:, :-1, :])
        return tau_grid, ws, path[:, -1, :]

    if parametrization in ("circulant", "patch"):
        if parametrization == "circulant":
            offsets = np.arange(d)
        else:
            if half_width is None:
                raise ValueError("patch parametrization needs half_width")
            offsets = np.arange(-half_width, half_width + 1)
        rate = rate0 * d  # weight sharing multiplies every rate by N

        def rhs(_t, taps):
            w = _circulant_from_taps(taps, offsets, d)
            gw, _ = loss_gradients(w, np.zeros(d), mm)
            return -eta * _sum_over_offsets(gw, offsets, d)

        taps0 = np.asarray(w0, float)
        path = _solve(rhs, taps0, tau_grid, rate, solve)
        ws = np.stack([_circulant_from_taps(t, offsets, d) for t in path])
        return tau_grid, ws, np.zeros((len(tau_grid), d))

    raise ValueError(f"unknown parametrization {parametrization!r}")


def _solve(rhs, y0, tau_grid, rate, solve: OdeSolveConfig):
    grid = tau_grid if tau_grid[0] == 0 else np.concatenate([[0.0], tau_grid])
    if solve.method == "rk45-adaptive":
        path = rk45_path(rhs, y0, grid, rtol=solve.rtol, atol=solve.atol, max_steps=solve.max_steps)
    else:
        path = rk4_path(rhs, y0, grid, max_rate=rate, substeps=solve.substeps)
    return path if tau_grid[0] == 0 else path[1:]


def discrete_gd_full(
    moments: DataMoments,
    s: float,
    eta: float,
    w0: np.ndarray,
    b0: np.ndarray,
    steps: int,
    variant: LossVariant = LossVariant.edm(),
):
    """Plain gradient descent iterates on (W, b); divergence left to the caller."""
    mm = variant_moments(variant, moments, s)
    w, b = np.asarray(w0, float).copy(), np.asarray(b0, float).copy()
    ws, bs = [w.copy()], [b.copy()]
    for _ in range(steps):
        gw, gb = loss_gradients(w, b, mm)
        w = w - eta * gw
        b = b - eta * gb
        ws.append(w.copy())
        bs.append(b.copy())
    return np.stack(ws), np.stack(bs)


def mc_dsm_loss(w, b, moments: DataMoments, sigma: float, n: int, seed: int):
    """Monte Carlo denoising loss E |W(x0 + sigma z) + b - x0|^2.

    Returns (estimate, standard_error).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    evals, evecs = np.linalg.eigh(moments.covariance)
    root = evecs * np.sqrt(np.clip(evals, 0.0, None))
    x0 = moments.mean + rng.standard_normal((n, moments.dim)) @ root.T
    z = rng.standard_normal((n, moments.dim))
    resid = (x0 + sigma * z) @ w.T + b - x0
    per_sample = np.sum(resid**2, axis=1)
    est = float(per_sample.mean())
    sem = float(per_sample.std(ddof=1) / np.sqrt(n)) if n > 1 else float("inf")
    return est, sem


def dense_dft_diag(sigma_mat: np.ndarray) -> np.ndarray:
    """diag(F* Sigma F) by explicit dense complex products; N <= 512 guard."""
    sigma_mat = np.asarray(sigma_mat, dtype=float)
    n = sigma_mat.shape[0]
    if n > 512:
        raise ValueError("dense DFT oracle is guarded to N <= 512")
    j, k = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    f = np.exp(-2j * np.pi * j * k / n) / np.sqrt(n)
    return np.diagonal(f.conj().T @ sigma_mat @ f).copy()


def heun_affine_dense(weight_matrix_fn, bias_fn, sigma_grid, x_start: np.ndarray):
    """Heun integration of dx/dsigma = -[(W(s) - I) x + b(s)] / s on dense W."""
    sigma_grid = np.asarray(sigma_grid, float)
    x = np.asarray(x_start, float).copy()
    eye = np.eye(x.shape[-1])

    def drift(xv, s):
        w = weight_matrix_fn(s)
        b = bias_fn(s) if bias_fn is not None else 0.0
        return -((w - eye) @ xv + b) / s

    for i in range(len(sigma_grid) - 1):
        s0, s1 = sigma_grid[i], sigma_grid[i + 1]
        d0 = drift(x, s0)
        x_pred = x + (s1 - s0) * d0
        d1 = drift(x_pred, s1)
        x = x + 0.5 * (s1 - s0) * (d0 + d1)
    return x
