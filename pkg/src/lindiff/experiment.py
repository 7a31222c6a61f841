"""Experiment orchestration: config parsing, sweeps, file emission.

Configs are flat ``section.key = value`` text files, overridable by
command-line ``--set`` flags.  A run produces deterministic data files
(trajectories, emergence table, power-law fit, manifest); plotting is
left to downstream tooling.
"""

from __future__ import annotations

import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import EmergenceCriterion, GrayZone, emergence_time, power_law_fit
from .dynamics import (
    DynamicsConfig,
    LossVariant,
    OneLayer,
    TwoLayerSymmetric,
    one_layer_psi,
    two_layer_psi,
)
from .gaussian import (
    CovarianceModel,
    SpectrumSpec,
    empirical_moments,
    make_covariance,
    read_samples,
)
from .oracle import OdeSolveConfig, gradient_flow_full
from .sampler import NoiseSchedule, PhiFactor, generated_variance

__all__ = ["ConfigError", "ExperimentConfig", "parse_config_text", "run_experiment", "oracle_deviation"]

ORACLE_TOLERANCE = 1e-6


class ConfigError(ValueError):
    """Invalid configuration; message carries the dotted field path."""


def parse_config_text(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; '#' starts a comment; blanks ignored."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _get(cfg: dict, key: str, default, cast):
    if key not in cfg:
        return default
    try:
        if cast is bool:
            v = cfg[key].lower()
            if v not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(v)
            return v in ("true", "1", "yes")
        return cast(cfg[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: cannot parse {cfg[key]!r}") from exc


def _floats(raw: str) -> list[float]:
    return [float(tok) for tok in raw.split(",") if tok.strip()]


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated sweep configuration (see README for the key reference)."""

    model_kind: str = "log-spaced"
    dim: int = 16
    model_params: dict = field(default_factory=lambda: {"lo": 1e-3, "hi": 10.0})
    normalize: bool = False
    data_path: str | None = None
    arch: str = "one-layer"
    q_init: float = 0.1
    eta: float = 1.0
    tau_min: float = 1e-4
    tau_max: float = 1e6
    tau_points: int = 241
    tau_override: tuple | None = None
    report_sigmas: tuple = (0.1, 1.0, 10.0)
    schedule: NoiseSchedule = NoiseSchedule()
    criterion: str = "geometric"
    gray_lower: float = 0.5
    gray_upper: float = 2.0
    seed: int = 0
    out_dir: str = "out"
    fmt: str = "csv"
    validate_with_oracle: bool = False

    def taus(self) -> np.ndarray:
        if self.tau_override is not None:
            return np.asarray(self.tau_override, dtype=float)
        return np.geomspace(self.tau_min, self.tau_max, self.tau_points)

    @staticmethod
    def from_flat(cfg: dict[str, str]) -> "ExperimentConfig":
        kind = _get(cfg, "model.kind", "log-spaced", str)
        if kind not in ("log-spaced", "log-normal", "explicit", "data"):
            raise ConfigError(f"model.kind: unknown kind {kind!r}")
        params: dict = {}
        data_path = None
        if kind == "log-spaced":
            params = {"lo": _get(cfg, "model.lo", 1e-3, float), "hi": _get(cfg, "model.hi", 10.0, float)}
        elif kind == "log-normal":
            params = {"mu": _get(cfg, "model.mu", 0.0, float), "sd": _get(cfg, "model.sd", 1.0, float)}
        elif kind == "explicit":
            if "model.values" not in cfg:
                raise ConfigError("model.values: required for explicit spectra")
            params = {"values": _floats(cfg["model.values"])}
        else:
            data_path = _get(cfg, "model.data", None, str)
            if not data_path:
                raise ConfigError("model.data: required when model.kind = data")

        arch = _get(cfg, "arch.kind", "one-layer", str)
        if arch not in ("one-layer", "two-layer"):
            raise ConfigError(f"arch.kind: unknown architecture {arch!r}")
        crit = _get(cfg, "analysis.criterion", "geometric", str)
        if crit not in ("geometric", "harmonic"):
            raise ConfigError(f"analysis.criterion: unknown criterion {crit!r}")
        lower = _get(cfg, "analysis.gray_zone.lower", 0.5, float)
        upper = _get(cfg, "analysis.gray_zone.upper", 2.0, float)
        if not 0 < lower < 1:
            raise ConfigError("analysis.gray_zone.lower: must lie in (0, 1)")
        if upper <= 1:
            raise ConfigError("analysis.gray_zone.upper: must exceed 1")
        fmt = _get(cfg, "run.format", "csv", str)
        if fmt not in ("csv", "json"):
            raise ConfigError(f"run.format: unknown format {fmt!r}")
        try:
            schedule = NoiseSchedule(
                sigma_min=_get(cfg, "schedule.sigma_min", 0.002, float),
                sigma_max=_get(cfg, "schedule.sigma_max", 80.0, float),
                rho=_get(cfg, "schedule.rho", 7.0, float),
                num_steps=_get(cfg, "schedule.steps", 80, int),
            )
        except ValueError as exc:
            raise ConfigError(f"schedule: {exc}") from exc
        q_init = _get(cfg, "arch.q_init", 0.1, float)
        if arch == "two-layer" and q_init <= 0:
            raise ConfigError("arch.q_init: two-layer requires Q > 0")
        eta = _get(cfg, "dynamics.eta", 1.0, float)
        if eta <= 0:
            raise ConfigError("dynamics.eta: must be positive")
        tau_min = _get(cfg, "dynamics.tau_min", 1e-4, float)
        tau_max = _get(cfg, "dynamics.tau_max", 1e6, float)
        if not 0 < tau_min < tau_max:
            raise ConfigError("dynamics.tau_min: need 0 < tau_min < tau_max")
        tau_override = None
        if "dynamics.tau" in cfg:
            tau_override = tuple(_floats(cfg["dynamics.tau"]))
            if any(t < 0 for t in tau_override):
                raise ConfigError("dynamics.tau: values must be nonnegative")
        return ExperimentConfig(
            model_kind=kind,
            dim=_get(cfg, "model.dim", 16, int),
            model_params=params,
            normalize=_get(cfg, "model.normalize", False, bool),
            data_path=data_path,
            arch=arch,
            q_init=q_init,
            eta=eta,
            tau_min=tau_min,
            tau_max=tau_max,
            tau_points=_get(cfg, "dynamics.tau_points", 241, int),
            tau_override=tau_override,
            report_sigmas=tuple(_floats(cfg.get("report.sigmas", "0.1,1,10"))),
            schedule=schedule,
            criterion=crit,
            gray_lower=lower,
            gray_upper=upper,
            seed=_get(cfg, "run.seed", 0, int),
            out_dir=_get(cfg, "run.out", "out", str),
            fmt=fmt,
            validate_with_oracle=_get(cfg, "run.validate_with_oracle", False, bool),
        )


def _build_model(cfg: ExperimentConfig) -> CovarianceModel:
    if cfg.model_kind == "data":
        samples = read_samples(cfg.data_path)
        return empirical_moments(samples).eigenmodel()
    spec = SpectrumSpec(cfg.model_kind, cfg.model_params, cfg.normalize)
    return make_covariance(spec, cfg.dim, cfg.seed)


def _lambda_gen(cfg: ExperimentConfig, lam: float, tau: float) -> float:
    case = "one-layer" if cfg.arch == "one-layer" else "two-layer"
    phi = PhiFactor(case, lam=lam, q=cfg.q_init, eta=cfg.eta, tau=tau)
    return generated_variance(phi, cfg.schedule)


def _psi(cfg: ExperimentConfig, lam, sigma, tau):
    fn = one_layer_psi if cfg.arch == "one-layer" else two_layer_psi
    return fn(lam, sigma, cfg.q_init, cfg.eta, tau)


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def oracle_deviation(cfg: ExperimentConfig, model: CovarianceModel, n_tau: int = 8) -> float:
    """Max relative gap between closed-form weights and raw gradient flow."""
    taus = np.geomspace(max(cfg.tau_min, 1e-3), min(cfg.tau_max, 10.0), n_tau)
    moments = _zero_mean_moments(model)
    worst = 0.0
    for sigma in cfg.report_sigmas:
        if cfg.arch == "one-layer":
            w0 = (model.basis * cfg.q_init) @ model.basis.T
            _, ws, _ = gradient_flow_full(
                moments, sigma, cfg.eta, w0, np.zeros(model.dim), taus
            )
        else:
            p0 = model.basis * np.sqrt(cfg.q_init)
            _, ws, _ = gradient_flow_full(
                moments, sigma, cfg.eta, p0, np.zeros(model.dim), taus,
                parametrization="two-layer-symmetric",
            )
        numeric = np.einsum("ik,tij,jk->tk", model.basis, ws, model.basis)
        closed = _psi(cfg, model.spectrum[None, :], sigma, taus[:, None])
        scale = np.maximum(np.abs(closed), 1e-12)
        worst = max(worst, float(np.max(np.abs(numeric - closed) / scale)))
    return worst


def _zero_mean_moments(model: CovarianceModel):
    from .gaussian import DataMoments

    return DataMoments(np.zeros(model.dim), model.covariance())


ALL_STAGES = frozenset({"trajectories", "emergence", "kl"})


def run_experiment(cfg: ExperimentConfig, stages: frozenset = frozenset({"trajectories", "emergence"})) -> dict:
    """Run the sweep and write the requested output files; returns the manifest.

    Stages: 'trajectories' (weights + generated variances), 'emergence'
    (first-passage table + power-law fit), 'kl' (per-mode KL over tau).
    """
    t_start = time.perf_counter()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = _build_model(cfg)
    lam = model.spectrum
    taus = cfg.taus()
    s0, s_t = cfg.schedule.sigma_min, cfg.schedule.sigma_max

    lam_gen = np.array([[_lambda_gen(cfg, l, t) for t in taus] for l in lam])
    v0 = s_t**2 * (s0 / s_t) ** (2.0 * (1.0 - cfg.q_init))
    targets = s_t**2 * (lam + s0**2) / (lam + s_t**2)

    written = []
    fit_payload = None
    if "trajectories" in stages:
        written.append(_emit_trajectories(cfg, out, model, taus, lam_gen))
    if "emergence" in stages:
        if len(taus) < 2:
            raise ConfigError("dynamics.tau: emergence extraction needs >= 2 tau points")
        crit = EmergenceCriterion(cfg.criterion)
        gz = GrayZone(cfg.gray_lower, cfg.gray_upper)
        tau_stars, branches, excluded = [], [], []
        for k in range(model.dim):
            tau_stars.append(emergence_time(taus, lam_gen[k], v0, targets[k], crit))
            branches.append("increasing" if targets[k] > v0 else "decreasing")
            excluded.append(gz.excludes(v0, targets[k]))
        fits, fit_error = {}, None
        try:
            fits = power_law_fit(lam, tau_stars, gz, np.full(model.dim, v0), targets)
        except ValueError as exc:
            fit_error = str(exc)
        written.append(_emit_emergence(cfg, out, model, tau_stars, branches, excluded))
        fit_payload = {
            "criterion": cfg.criterion,
            "gray_zone": {"lower": cfg.gray_lower, "upper": cfg.gray_upper},
            "branches": {
                name: {
                    "alpha": fit.alpha,
                    "intercept": fit.intercept,
                    "r_squared": fit.r_squared,
                    "n_used": fit.n_used,
                }
                for name, fit in fits.items()
            },
        }
        if fit_error:
            fit_payload["error"] = fit_error
        _write_json(out / "fit.json", fit_payload)
        written.append("fit.json")
    if "kl" in stages:
        written.append(_emit_kl(cfg, out, model, taus, lam_gen))

    manifest = {
        "config": _echo(cfg),
        "seed": cfg.seed,
        "versions": {
            "lindiff": __version__,
            "numpy": np.__version__,
            "python": ".".join(map(str, sys.version_info[:3])),
        },
        "outputs": sorted(written + ["manifest.json"]),
    }
    if cfg.validate_with_oracle:
        dev = oracle_deviation(cfg, model)
        manifest["oracle"] = {
            "max_rel_deviation": dev,
            "tolerance": ORACLE_TOLERANCE,
            "passed": bool(dev < ORACLE_TOLERANCE),
        }
    manifest["wall_clock_s"] = time.perf_counter() - t_start
    _write_json(out / "manifest.json", manifest)
    return manifest


def _echo(cfg: ExperimentConfig) -> dict:
    d = {
        "model.kind": cfg.model_kind,
        "model.dim": cfg.dim,
        "model.normalize": cfg.normalize,
        "arch.kind": cfg.arch,
        "arch.q_init": cfg.q_init,
        "dynamics.eta": cfg.eta,
        "dynamics.tau_min": cfg.tau_min,
        "dynamics.tau_max": cfg.tau_max,
        "dynamics.tau_points": cfg.tau_points,
        "report.sigmas": list(cfg.report_sigmas),
        "schedule.sigma_min": cfg.schedule.sigma_min,
        "schedule.sigma_max": cfg.schedule.sigma_max,
        "schedule.rho": cfg.schedule.rho,
        "schedule.steps": cfg.schedule.num_steps,
        "analysis.criterion": cfg.criterion,
        "analysis.gray_zone.lower": cfg.gray_lower,
        "analysis.gray_zone.upper": cfg.gray_upper,
        "run.seed": cfg.seed,
        "run.format": cfg.fmt,
        "run.validate_with_oracle": cfg.validate_with_oracle,
    }
    d.update({f"model.{k}": v for k, v in cfg.model_params.items()})
    if cfg.data_path:
        d["model.data"] = cfg.data_path
    return d


def _emit_trajectories(cfg, out: Path, model, taus, lam_gen) -> str:
    rows = []
    for k in range(model.dim):
        for i, tau in enumerate(taus):
            for sigma in cfg.report_sigmas:
                psi = float(_psi(cfg, model.spectrum[k], sigma, tau))
                rows.append(
                    (k, model.spectrum[k], tau, sigma, psi, lam_gen[k, i])
                )
    header = ["mode_index", "lambda_target", "tau", "sigma", "psi", "lambda_gen"]
    return _emit_table(cfg, out, "trajectories", header, rows)


def _emit_emergence(cfg, out: Path, model, tau_stars, branches, excluded) -> str:
    rows = []
    for k in range(model.dim):
        ts = "" if tau_stars[k] is None else _fmt(tau_stars[k])
        rows.append((k, _fmt(model.spectrum[k]), ts, branches[k], int(excluded[k])))
    header = ["mode_index", "lambda_target", "tau_star", "branch", "excluded_flag"]
    return _emit_table(cfg, out, "emergence", header, rows, preformatted=True)


def _emit_kl(cfg, out: Path, model, taus, lam_gen) -> str:
    from .metrics import kl_shared_basis

    zero = np.zeros(model.dim)
    rows = []
    for i, tau in enumerate(taus):
        kl = kl_shared_basis(np.maximum(lam_gen[:, i], 1e-300), model.spectrum, zero, zero, model.basis)
        for k in range(model.dim):
            rows.append((k, model.spectrum[k], tau, lam_gen[k, i], kl.per_mode[k]))
    header = ["mode_index", "lambda_target", "tau", "lambda_gen", "kl"]
    return _emit_table(cfg, out, "kl", header, rows)


def _cell(value, preformatted: bool) -> str:
    if isinstance(value, str):
        return value
    if preformatted or isinstance(value, (int, np.integer)):
        return str(value)
    return _fmt(value)


def _emit_table(cfg, out: Path, name: str, header, rows, preformatted=False) -> str:
    if cfg.fmt == "csv":
        path = out / f"{name}.csv"
        lines = [",".join(header)]
        for row in rows:
            lines.append(",".join(_cell(c, preformatted) for c in row))
        path.write_text("\n".join(lines) + "\n")
        return path.name
    path = out / f"{name}.json"
    payload = [dict(zip(header, row)) for row in rows]
    _write_json(path, payload)
    return path.name


def _write_json(path: Path, payload) -> None:
    class _F(json.JSONEncoder):
        def default(self, o):
            if isinstance(o, (np.integer,)):
                return int(o)
            if isinstance(o, (np.floating,)):
                return float(o)
            if isinstance(o, np.ndarray):
                return o.tolist()
            return super().default(o)

    path.write_text(json.dumps(payload, indent=2, sort_keys=True, cls=_F) + "\n")
