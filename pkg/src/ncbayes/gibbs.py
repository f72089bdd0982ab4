"""Blocked Gibbs samplers for the classification posterior.

One sweep alternates a Polya-Gamma draw per pooled point,

    omega_i ~ PG(1, z_i @ gamma + C_i),

with a Gaussian draw of the full coefficient vector whose precision is
the prior precision plus sum_i omega_i z_i z_i^T.  Noise handling comes
in three flavors: a fixed noise set, a fresh noise set every iteration,
and tempered importance resampling on a cadence.  A hierarchical variant
shares a Gaussian population law across groups with conjugate
hyperparameter updates.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import scipy.linalg as sla
from scipy.linalg.blas import dsyrk
from scipy.stats import invwishart

from .errors import NumericalError
from .expfam import ExpFamModel, LabeledSample, Rectangle, Torus, stack_samples
from .noise import NoiseAdaptConfig, NoiseSpec, TemperedNoiseState, tempered_resample
from .pg import sample_pg1_batch
from .rng import as_generator, sample_inv_gamma

__all__ = [
    "GaussianPrior",
    "GibbsConfig",
    "PosteriorDraws",
    "HierarchicalHyper",
    "HierarchicalDraws",
    "gaussian_conditional",
    "run_fixed_noise",
    "run_refreshed_noise",
    "run_adaptive_noise",
    "run_hierarchical",
]

log = logging.getLogger(__name__)


@dataclass
class GaussianPrior:
    """N(mean, cov) prior on the full coefficient vector (theta, beta)."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, float))
        self.cov = np.atleast_2d(np.asarray(self.cov, float))
        k = self.mean.size
        if self.cov.shape != (k, k):
            raise ValueError("prior covariance shape does not match mean")
        if not np.allclose(self.cov, self.cov.T, atol=1e-10):
            raise ValueError("prior covariance must be symmetric")
        try:
            chol = sla.cholesky(self.cov, lower=True)
        except sla.LinAlgError as e:
            raise ValueError("prior covariance is not positive definite") from e
        eye = np.eye(k)
        self.precision = sla.cho_solve((chol, True), eye)
        self.nat_mean = self.precision @ self.mean

    @classmethod
    def iso(cls, k: int, var: float = 100.0, mean: float = 0.0) -> "GaussianPrior":
        return cls(np.full(k, float(mean)), np.eye(k) * float(var))

    # interface shared with shrinkage priors
    def initial_coef(self) -> np.ndarray:
        return self.mean.copy()

    def precision_natmean(self) -> tuple[np.ndarray, np.ndarray]:
        return self.precision, self.nat_mean

    def gibbs_update(self, gamma: np.ndarray, gen: np.random.Generator) -> None:
        pass


@dataclass(frozen=True)
class GibbsConfig:
    iterations: int = 3000
    burn_in: int = 1000
    thin: int = 1
    seed: int = 0
    noise_mode: str = "fixed"  # fixed | refresh | adaptive
    adapt: NoiseAdaptConfig = field(default_factory=NoiseAdaptConfig)

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be positive")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("burn_in must satisfy 0 <= burn_in < iterations")
        if self.thin < 1:
            raise ValueError("thin must be positive")
        if self.kept < 1:
            raise ValueError("config keeps no draws")
        if self.noise_mode not in ("fixed", "refresh", "adaptive"):
            raise ValueError(f"unknown noise_mode {self.noise_mode!r}")

    @property
    def kept(self) -> int:
        return (self.iterations - self.burn_in + self.thin - 1) // self.thin


@dataclass
class PosteriorDraws:
    """Kept coefficient draws plus per-draw diagnostics."""

    draws: np.ndarray                   # (kept, p+1), or (kept, p) without intercept
    loglik: np.ndarray                  # per kept draw
    ess_events: np.ndarray | None = None  # (events, 2): iteration, noise ESS
    refreshed: bool = False
    jitter_retries: int = 0
    ess_warnings: int = 0
    has_intercept: bool = True

    @property
    def theta(self) -> np.ndarray:
        return self.draws[:, :-1] if self.has_intercept else self.draws

    @property
    def beta(self) -> np.ndarray:
        if not self.has_intercept:
            raise ValueError("these draws carry no intercept coordinate")
        return self.draws[:, -1]


def _chol_jittered(P: np.ndarray) -> tuple[np.ndarray, int]:
    """Lower Cholesky factor of a (lower-triangle-valid) precision matrix.

    One retry with diagonal jitter scaled to the mean diagonal magnitude;
    a second failure is a NumericalError.
    """
    try:
        return sla.cholesky(P, lower=True), 0
    except sla.LinAlgError:
        pass
    jit = 1e-8 * float(np.trace(P)) / P.shape[0]
    try:
        return sla.cholesky(P + jit * np.eye(P.shape[0]), lower=True), 1
    except sla.LinAlgError as e:
        raise NumericalError("conditional precision not SPD after jitter") from e


def _data_precision(Z: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """Lower triangle of sum_i omega_i z_i z_i^T (upper half is garbage)."""
    A = Z * np.sqrt(omega)[:, None]
    return dsyrk(1.0, A, trans=1, lower=1)


def _draw_gaussian(P, rhs, gen) -> tuple[np.ndarray, np.ndarray, int]:
    """Sample N(P^-1 rhs, P^-1) given lower-valid precision P."""
    L, retries = _chol_jittered(P)
    mean = sla.cho_solve((L, True), rhs)
    xi = gen.standard_normal(P.shape[0])
    draw = mean + sla.solve_triangular(L, xi, lower=True, trans="T")
    return draw, mean, retries


def _add_prior(Pdata: np.ndarray, P0: np.ndarray) -> np.ndarray:
    """Prior precision (dense or diagonal vector) added onto the data term."""
    if P0.ndim == 1:
        P = Pdata.copy()
        P[np.diag_indices_from(P)] += P0
        return P
    return Pdata + P0


def gaussian_conditional(
    prior: GaussianPrior,
    samples: Sequence[LabeledSample],
    omegas,
) -> tuple[np.ndarray, np.ndarray]:
    """Exact conditional (A1, B1) of the coefficient block given omegas.

    B1 = (B0^-1 + sum omega_i z_i z_i')^-1,
    A1 = B1 (sum (s_i - 1/2 - omega_i C_i) z_i + B0^-1 A0).
    """
    omegas = np.asarray(omegas, float)
    if len(samples) == 0:
        if omegas.size:
            raise ValueError("omegas supplied without samples")
        return prior.mean.copy(), prior.cov.copy()
    if omegas.shape != (len(samples),):
        raise ValueError("need exactly one omega per sample")
    if np.any(omegas < 0) or not np.all(np.isfinite(omegas)):
        raise ValueError("omegas must be finite and nonnegative")
    Z, C, lab = stack_samples(samples)
    P = _add_prior(_data_precision(Z, omegas), prior.precision)
    rhs = Z.T @ (lab - 0.5 - omegas * C) + prior.nat_mean
    L, _ = _chol_jittered(P)
    B1 = sla.cho_solve((L, True), np.eye(P.shape[0]))
    B1 = 0.5 * (B1 + B1.T)
    return B1 @ rhs, B1


def _log_class_lik(psi: np.ndarray, labels: np.ndarray) -> float:
    return float(np.sum(labels * psi - np.logaddexp(0.0, psi)))


def _fit(model: ExpFamModel, data, prior, cfg: GibbsConfig, noise: NoiseSpec,
         base=None) -> PosteriorDraws:
    gen = as_generator(cfg.seed)
    data = np.atleast_2d(np.asarray(data, float))
    n = data.shape[0]
    if n < 1:
        raise ValueError("need at least one genuine observation")
    if not np.all(model.domain.contains(data)):
        raise ValueError("genuine observations outside the model domain")
    Zg = model.design(data)
    logh_g = model.log_h(data)
    m = noise.m
    mode = cfg.noise_mode
    adapt = cfg.adapt
    labels = np.concatenate([np.ones(n), np.zeros(m)])
    log_ratio = np.log(n) - np.log(m)

    def offsets(logh_n, logq_g, logq_n):
        return log_ratio + np.concatenate([logh_g - logq_g, logh_n - logq_n])

    state = None
    if mode == "fixed":
        Xn = np.atleast_2d(np.asarray(noise.points, float))
        if Xn.shape[0] != m:
            raise ValueError("noise point count disagrees with noise.m")
        Zn = model.design(Xn)
        logq_g = np.asarray(noise.log_density(data), float)
        logq_n = np.asarray(noise.log_density(Xn), float)
        if not (np.all(np.isfinite(logq_g)) and np.all(np.isfinite(logq_n))):
            raise ValueError("noise density vanishes at a pooled point")
        C = offsets(model.log_h(Xn), logq_g, logq_n)
        Z = np.vstack([Zg, Zn])
    elif mode == "refresh":
        logq_g = np.asarray(noise.log_density(data), float)
        if not np.all(np.isfinite(logq_g)):
            raise ValueError("noise density vanishes at a genuine point")
        Z = C = None  # built at the top of every iteration
    else:  # adaptive
        if base is None:
            if isinstance(model.domain, Torus):
                base = model.domain
            else:
                base = Rectangle.around(data, frac=0.1)
        state = TemperedNoiseState(
            gamma_tilde=np.zeros(Zg.shape[1]),
            alpha=adapt.alpha,
            n_proposals=adapt.proposal_factor * m,
            base=base,
        )
        Xn = base.sample(m, gen)
        Zn = model.design(Xn)
        logq = base.log_uniform()
        C = offsets(model.log_h(Xn), np.full(n, logq), np.full(m, logq))
        Z = np.vstack([Zg, Zn])

    gamma = prior.initial_coef()
    if gamma.shape != (Zg.shape[1],):
        raise ValueError("prior dimension disagrees with the design")
    kept = cfg.kept
    draws = np.empty((kept, gamma.size))
    loglik = np.empty(kept)
    gsum = np.zeros(gamma.size)
    gcount = 0
    ess_events: list[tuple[int, float]] = []
    jitter_total = 0
    warn_count = 0
    k = 0

    for it in range(1, cfg.iterations + 1):
        if mode == "refresh":
            Xn = np.atleast_2d(np.asarray(noise.sampler(m, gen), float))
            if Xn.shape[0] != m:
                raise ValueError("noise sampler returned the wrong count")
            Zn = model.design(Xn)
            logq_n = np.asarray(noise.log_density(Xn), float)
            if not np.all(np.isfinite(logq_n)):
                raise ValueError("noise density vanishes at a noise point")
            C = offsets(model.log_h(Xn), logq_g, logq_n)
            Z = np.vstack([Zg, Zn])
        elif (
            mode == "adaptive"
            and gcount >= adapt.batch
            and (adapt.during == "all" or it <= cfg.burn_in)
        ):
            state.gamma_tilde = gsum / gcount
            gsum[:] = 0.0
            gcount = 0
            Xn, state = tempered_resample(state, m, model.design, gen, adapt.scheme)
            ess_events.append((it, state.last_ess))
            if state.last_ess < adapt.ess_warn_factor * state.n_proposals:
                warn_count += 1
                log.warning(
                    "noise ESS %.1f below %.1f at iteration %d",
                    state.last_ess, adapt.ess_warn_factor * state.n_proposals, it,
                )
            Zn = model.design(Xn)
            C = offsets(
                model.log_h(Xn), state.log_density(Zg), state.log_density(Zn)
            )
            Z = np.vstack([Zg, Zn])

        psi = Z @ gamma + C
        omega = sample_pg1_batch(psi, gen)
        P0, b0 = prior.precision_natmean()
        P = _add_prior(_data_precision(Z, omega), P0)
        rhs = Z.T @ (labels - 0.5 - omega * C) + b0
        gamma, _, retries = _draw_gaussian(P, rhs, gen)
        jitter_total += retries
        prior.gibbs_update(gamma, gen)
        if mode == "adaptive":
            gsum += gamma
            gcount += 1
        if it > cfg.burn_in and (it - cfg.burn_in - 1) % cfg.thin == 0:
            draws[k] = gamma
            loglik[k] = _log_class_lik(Z @ gamma + C, labels)
            k += 1

    return PosteriorDraws(
        draws=draws,
        loglik=loglik,
        ess_events=np.array(ess_events) if ess_events else None,
        refreshed=(mode != "fixed"),
        jitter_retries=jitter_total,
        ess_warnings=warn_count,
    )


def run_fixed_noise(
    model: ExpFamModel,
    data,
    noise_set,
    prior,
    cfg: GibbsConfig,
    log_noise_density=None,
) -> PosteriorDraws:
    """Gibbs chain against one fixed noise set.

    ``log_noise_density`` defaults to the uniform density on the model
    domain, which is the right reference for torus models.
    """
    noise_set = np.atleast_2d(np.asarray(noise_set, float))
    if noise_set.shape[0] < 1:
        raise ValueError("noise set is empty")
    if log_noise_density is None:
        lu = model.domain.log_uniform()
        log_noise_density = lambda X: np.full(np.atleast_2d(X).shape[0], lu)
    spec = NoiseSpec(
        mode="fixed-set",
        m=noise_set.shape[0],
        log_density=log_noise_density,
        points=noise_set,
    )
    return _fit(model, data, prior, replace(cfg, noise_mode="fixed"), spec)


def run_refreshed_noise(
    model: ExpFamModel, data, noise_spec: NoiseSpec, prior, cfg: GibbsConfig
) -> PosteriorDraws:
    """Gibbs chain with a fresh noise set drawn every iteration."""
    if noise_spec.mode != "generator":
        raise ValueError("run_refreshed_noise needs a generator noise spec")
    return _fit(model, data, prior, replace(cfg, noise_mode="refresh"), noise_spec)


def run_adaptive_noise(
    model: ExpFamModel,
    data,
    m: int,
    prior,
    cfg: GibbsConfig,
    base=None,
) -> PosteriorDraws:
    """Gibbs chain with tempered-importance-resampled noise on a cadence."""
    spec = NoiseSpec(mode="adaptive", m=m)
    return _fit(model, data, prior, replace(cfg, noise_mode="adaptive"), spec, base=base)


@dataclass(frozen=True)
class HierarchicalHyper:
    """Conjugate hyperpriors for the population law of (theta_j, beta_j)."""

    mu_mean: float = 0.0
    mu_var: float = 100.0
    iw_df: float | None = None      # default p + 2
    iw_scale: np.ndarray | None = None  # default identity
    mu_beta_mean: float = 0.0
    mu_beta_var: float = 100.0
    sb2_shape: float = 1.0
    sb2_scale: float = 1.0


@dataclass
class HierarchicalDraws:
    groups: list[PosteriorDraws]
    mu: np.ndarray           # (kept, p)
    Sigma: np.ndarray        # (kept, p, p)
    mu_beta: np.ndarray      # (kept,)
    sigma_beta2: np.ndarray  # (kept,)


def _group_blocks(model, data_j, spec, gen):
    data_j = np.atleast_2d(np.asarray(data_j, float))
    if data_j.shape[0] < 1:
        raise ValueError("empty group")
    if not np.all(model.domain.contains(data_j)):
        raise ValueError("group observations outside the model domain")
    Zg = model.design(data_j)
    logh_g = model.log_h(data_j)
    logq_g = np.asarray(spec.log_density(data_j), float)
    if not np.all(np.isfinite(logq_g)):
        raise ValueError("noise density vanishes at a genuine point")
    return data_j, Zg, logh_g, logq_g


def run_hierarchical(
    model: ExpFamModel,
    grouped_data: Sequence,
    noise: NoiseSpec | Sequence[NoiseSpec],
    cfg: GibbsConfig,
    hyper: HierarchicalHyper | None = None,
    freeze_hyper: bool = False,
    init: tuple | None = None,
) -> HierarchicalDraws:
    """Hierarchical chain: per-group coefficients under a shared Gaussian law.

    Each iteration draws omega and gamma_j for every group with prior
    precision blockdiag(Sigma^-1, 1/sigma_beta2) and natural mean
    (Sigma^-1 mu, mu_beta/sigma_beta2), then refreshes (mu, Sigma,
    mu_beta, sigma_beta2) by their conjugate conditionals unless frozen.
    ``init`` optionally fixes the starting (mu, Sigma, mu_beta, sigma_beta2).
    """
    hyper = hyper or HierarchicalHyper()
    gen = as_generator(cfg.seed)
    J = len(grouped_data)
    if J < 1:
        raise ValueError("need at least one group")
    specs = list(noise) if isinstance(noise, (list, tuple)) else [noise] * J
    if len(specs) != J:
        raise ValueError("need one noise spec per group")
    for s in specs:
        if s.mode == "adaptive":
            raise ValueError("adaptive noise is not supported per group")

    blocks = []
    for data_j, spec in zip(grouped_data, specs):
        data_j, Zg, logh_g, logq_g = _group_blocks(model, data_j, spec, gen)
        entry = {
            "Zg": Zg, "logh_g": logh_g, "logq_g": logq_g, "spec": spec,
            "n": Zg.shape[0],
            "labels": np.concatenate([np.ones(Zg.shape[0]), np.zeros(spec.m)]),
        }
        if spec.mode == "fixed-set":
            Xn = np.atleast_2d(np.asarray(spec.points, float))
            Zn = model.design(Xn)
            logq_n = np.asarray(spec.log_density(Xn), float)
            if not np.all(np.isfinite(logq_n)):
                raise ValueError("noise density vanishes at a noise point")
            entry["Z"] = np.vstack([Zg, Zn])
            entry["C"] = (
                np.log(entry["n"]) - np.log(spec.m)
                + np.concatenate([logh_g - logq_g, model.log_h(Xn) - logq_n])
            )
        blocks.append(entry)

    p1 = blocks[0]["Zg"].shape[1]
    p = p1 - 1
    iw_df = hyper.iw_df if hyper.iw_df is not None else p + 2
    iw_scale = hyper.iw_scale if hyper.iw_scale is not None else np.eye(p)
    iw_scale = np.asarray(iw_scale, float)

    if init is not None:
        mu, Sigma, mu_beta, sb2 = init
        mu = np.asarray(mu, float).copy()
        Sigma = np.asarray(Sigma, float).copy()
        mu_beta, sb2 = float(mu_beta), float(sb2)
    else:
        mu = np.zeros(p)
        Sigma = np.eye(p)
        mu_beta = 0.0
        sb2 = 1.0
    gammas = [np.append(mu, mu_beta) for _ in range(J)]

    kept = cfg.kept
    out_groups = [
        PosteriorDraws(draws=np.empty((kept, p1)), loglik=np.empty(kept),
                       refreshed=any(s.mode == "generator" for s in specs))
        for _ in range(J)
    ]
    mu_draws = np.empty((kept, p))
    Sigma_draws = np.empty((kept, p, p))
    mub_draws = np.empty(kept)
    sb2_draws = np.empty(kept)
    jitter_total = 0
    k = 0

    for it in range(1, cfg.iterations + 1):
        LS, _ = _chol_jittered(Sigma)
        Sigma_inv = sla.cho_solve((LS, True), np.eye(p))
        P0 = np.zeros((p1, p1))
        P0[:p, :p] = Sigma_inv
        P0[p, p] = 1.0 / sb2
        b0 = np.append(Sigma_inv @ mu, mu_beta / sb2)

        for j, blk in enumerate(blocks):
            spec = blk["spec"]
            if spec.mode == "generator":
                Xn = np.atleast_2d(np.asarray(spec.sampler(spec.m, gen), float))
                Zn = model.design(Xn)
                logq_n = np.asarray(spec.log_density(Xn), float)
                if not np.all(np.isfinite(logq_n)):
                    raise ValueError("noise density vanishes at a noise point")
                blk["Z"] = np.vstack([blk["Zg"], Zn])
                blk["C"] = (
                    np.log(blk["n"]) - np.log(spec.m)
                    + np.concatenate(
                        [blk["logh_g"] - blk["logq_g"], model.log_h(Xn) - logq_n]
                    )
                )
            Z, C, lab = blk["Z"], blk["C"], blk["labels"]
            psi = Z @ gammas[j] + C
            omega = sample_pg1_batch(psi, gen)
            P = _add_prior(_data_precision(Z, omega), P0)
            rhs = Z.T @ (lab - 0.5 - omega * C) + b0
            gammas[j], _, retries = _draw_gaussian(P, rhs, gen)
            jitter_total += retries

        if not freeze_hyper:
            thetas = np.stack([g[:p] for g in gammas])
            betas = np.array([g[p] for g in gammas])
            # mu | rest
            Vinv = J * Sigma_inv + np.eye(p) / hyper.mu_var
            vrhs = Sigma_inv @ thetas.sum(axis=0) + hyper.mu_mean / hyper.mu_var
            mu, _, _ = _draw_gaussian(Vinv, vrhs, gen)
            # Sigma | rest
            dev = thetas - mu
            Sigma = invwishart.rvs(
                df=iw_df + J, scale=iw_scale + dev.T @ dev, random_state=gen
            )
            Sigma = np.atleast_2d(Sigma)
            # mu_beta | rest
            v = 1.0 / (J / sb2 + 1.0 / hyper.mu_beta_var)
            mcond = v * (betas.sum() / sb2 + hyper.mu_beta_mean / hyper.mu_beta_var)
            mu_beta = mcond + np.sqrt(v) * gen.standard_normal()
            # sigma_beta2 | rest
            sb2 = float(sample_inv_gamma(
                hyper.sb2_shape + 0.5 * J,
                hyper.sb2_scale + 0.5 * np.sum((betas - mu_beta) ** 2),
                gen,
            ))

        if it > cfg.burn_in and (it - cfg.burn_in - 1) % cfg.thin == 0:
            for j, blk in enumerate(blocks):
                out_groups[j].draws[k] = gammas[j]
                out_groups[j].loglik[k] = _log_class_lik(
                    blk["Z"] @ gammas[j] + blk["C"], blk["labels"]
                )
            mu_draws[k] = mu
            Sigma_draws[k] = Sigma
            mub_draws[k] = mu_beta
            sb2_draws[k] = sb2
            k += 1

    for g in out_groups:
        g.jitter_retries = jitter_total
    return HierarchicalDraws(
        groups=out_groups, mu=mu_draws, Sigma=Sigma_draws,
        mu_beta=mub_draws, sigma_beta2=sb2_draws,
    )
