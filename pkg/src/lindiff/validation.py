"""Desk-scale oracle cross-check suites behind the `validate` subcommand.

Each suite compares a closed-form prediction against an independent
brute-force route and reports the worst deviation against its tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .convolution import (
    circulant_matrix,
    dft_mode_variance,
    full_width_gamma_trajectory,
    patch_covariance,
    patch_filter_trajectory,
)
from .dynamics import (
    LossVariant,
    mean_coupled_trajectory,
    one_layer_psi,
    two_layer_psi,
    DynamicsConfig,
    OneLayer,
)
from .gaussian import DataMoments, SpectrumSpec, make_covariance
from .oracle import OdeSolveConfig, gradient_flow_full, loss_gradients, variant_moments

__all__ = ["SuiteResult", "SUITES", "run_suite", "run_all"]

_RK45 = OdeSolveConfig(method="rk45-adaptive", rtol=1e-11, atol=1e-14)


@dataclass(frozen=True)
class SuiteResult:
    name: str
    deviation: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.deviation < self.tolerance


def _test_model(dim=8, lo=1e-3, hi=10.0, seed=7):
    return make_covariance(SpectrumSpec("log-spaced", {"lo": lo, "hi": hi}), dim, seed)


def _zero_moments(model):
    return DataMoments(np.zeros(model.dim), model.covariance())


def suite_one_layer() -> SuiteResult:
    model = _test_model()
    moments = _zero_moments(model)
    taus = np.geomspace(1e-3, 10.0, 12)
    q = 0.1
    worst = 0.0
    for sigma in (0.1, 1.0, 10.0):
        w0 = (model.basis * q) @ model.basis.T
        _, ws, _ = gradient_flow_full(moments, sigma, 1.0, w0, np.zeros(model.dim), taus, solve=_RK45)
        numeric = np.einsum("ik,tij,jk->tk", model.basis, ws, model.basis)
        closed = one_layer_psi(model.spectrum[None, :], sigma, q, 1.0, taus[:, None])
        worst = max(worst, float(np.max(np.abs(numeric - closed) / np.maximum(np.abs(closed), 1e-12))))
    return SuiteResult("one-layer", worst, 1e-6)


def suite_two_layer() -> SuiteResult:
    model = _test_model()
    moments = _zero_moments(model)
    taus = np.geomspace(1e-3, 10.0, 12)
    q = 0.1
    worst = 0.0
    for sigma in (0.1, 1.0, 10.0):
        p0 = model.basis * np.sqrt(q)
        _, ws, _ = gradient_flow_full(
            moments, sigma, 1.0, p0, np.zeros(model.dim), taus,
            parametrization="two-layer-symmetric", solve=_RK45,
        )
        numeric = np.einsum("ik,tij,jk->tk", model.basis, ws, model.basis)
        closed = two_layer_psi(model.spectrum[None, :], sigma, q, 1.0, taus[:, None])
        worst = max(worst, float(np.max(np.abs(numeric - closed) / np.maximum(np.abs(closed), 1e-12))))
    return SuiteResult("two-layer", worst, 1e-6)


def suite_mean_cov() -> SuiteResult:
    model = _test_model(dim=6, lo=0.05, hi=4.0, seed=3)
    rng = np.random.default_rng(11)
    mu = rng.normal(size=6) * 0.7
    moments = DataMoments(mu, model.covariance())
    taus = np.geomspace(1e-2, 8.0, 10)
    worst = 0.0
    for sigma in (0.5, 1.5):
        cfg = DynamicsConfig(1.0, taus, np.full(6, 0.2), sigma, OneLayer())
        sol = mean_coupled_trajectory(moments, cfg)
        w0 = (sol.basis * 0.2) @ sol.basis.T
        _, ws, bs = gradient_flow_full(moments, sigma, 1.0, w0, np.zeros(6), taus, solve=_RK45)
        for i in range(len(taus)):
            scale = max(1.0, float(np.max(np.abs(ws[i]))))
            worst = max(worst, float(np.max(np.abs(ws[i] - sol.weight_matrix(i)))) / scale)
            worst = max(worst, float(np.max(np.abs(bs[i] - sol.bias[i]))) / scale)
    return SuiteResult("mean-cov", worst, 1e-6)


def suite_conv() -> SuiteResult:
    n, r, seed = 16, 2, 5
    model = _test_model(dim=n, lo=0.05, hi=4.0, seed=seed)
    sigma_mat = model.covariance()
    mode_vars = dft_mode_variance(sigma_mat)
    taus = np.geomspace(1e-3, 2.0, 8)
    sigma, eta = 0.7, 1.0
    worst = 0.0
    # full-width trajectory == one-layer with lambda -> S_kk, eta -> N eta
    gamma = full_width_gamma_trajectory(mode_vars[None, :], 0.1, sigma, eta, n, taus[:, None])
    psi = one_layer_psi(mode_vars[None, :], sigma, 0.1, n * eta, taus[:, None])
    worst = max(worst, float(np.max(np.abs(gamma - psi))))
    # patch fixed point against the direct linear solve and the RK4 flow
    pc = patch_covariance(sigma_mat, r)
    path, w_star = patch_filter_trajectory(pc, sigma, eta, n, np.zeros(2 * r + 1), taus)
    a = sigma**2 * np.eye(2 * r + 1) + pc.matrix
    e0 = np.zeros(2 * r + 1)
    e0[r] = 1.0
    worst = max(worst, float(np.max(np.abs(a @ w_star - pc.matrix @ e0))))
    moments = DataMoments(np.zeros(n), sigma_mat)
    _, ws, _ = gradient_flow_full(
        moments, sigma, eta, np.zeros(2 * r + 1), np.zeros(n), taus,
        parametrization="patch", half_width=r, solve=_RK45,
    )
    offs = np.arange(-r, r + 1)
    taps = np.stack([[w[0, o % n] for o in offs] for w in ws])
    worst = max(worst, float(np.max(np.abs(taps - path))))
    # circulant matrices commute
    rng = np.random.default_rng(2)
    w1 = circulant_matrix(rng.normal(size=5), np.arange(-2, 3), n)
    w2 = circulant_matrix(rng.normal(size=5), np.arange(-2, 3), n)
    worst = max(worst, float(np.max(np.abs(w1 @ w2 - w2 @ w1))))
    return SuiteResult("conv", worst, 1e-6)


def suite_variants() -> SuiteResult:
    from .dynamics import convergence_rate, optimal_mode_weight

    model = _test_model(dim=5, lo=0.05, hi=3.0, seed=9)
    moments = _zero_moments(model)
    variants = [
        (LossVariant.edm(), 0.8),
        (LossVariant("XPred", alpha=lambda t: 1.0 / (1.0 + t), sigma_t=lambda t: t), 0.6),
        (LossVariant("EpsPred", alpha=lambda t: 1.0 / (1.0 + t), sigma_t=lambda t: t), 0.6),
        (LossVariant("VPred", alpha=lambda t: 1.0 / (1.0 + t), sigma_t=lambda t: t), 0.6),
        (LossVariant.flow_match(), 0.6),
    ]
    worst = 0.0
    for variant, s in variants:
        w_star = sum(
            optimal_mode_weight(variant, lam, s) * np.outer(model.basis[:, k], model.basis[:, k])
            for k, lam in enumerate(model.spectrum)
        )
        mm = variant_moments(variant, moments, s)
        gw, gb = loss_gradients(w_star, np.zeros(5), mm)
        worst = max(worst, float(np.max(np.abs(gw))), float(np.max(np.abs(gb))))
        rates = [convergence_rate(variant, lam, s) for lam in model.spectrum]
        if min(rates) <= 0:
            worst = max(worst, 1.0)
    return SuiteResult("variants", worst, 1e-8)


SUITES = {
    "one-layer": suite_one_layer,
    "two-layer": suite_two_layer,
    "mean-cov": suite_mean_cov,
    "conv": suite_conv,
    "variants": suite_variants,
}


def run_suite(name: str) -> list[SuiteResult]:
    if name == "all":
        return run_all()
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r} (choose from {sorted(SUITES)} or 'all')")
    return [SUITES[name]()]


def run_all() -> list[SuiteResult]:
    return [fn() for fn in SUITES.values()]
