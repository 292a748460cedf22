"""Factorial mixture model: generator, tempered mean-field updates, analytic log C(T).

Data points are sums of Bernoulli-activated latent features plus isotropic
Gaussian noise.  The global variational state holds one Gaussian per
feature with a per-feature scalar variance; as a flat natural-parameter
vector it is laid out as [h_11..h_KD, J_1..J_K] with mean m_k = h_k / J_k
and variance 1 / J_k.

For the partition estimators the local natural-parameter vector is
extended with the noise-precision coordinate, [mu_11..mu_KD, 1/noise_var],
so that scaling the vector by 1/T tempers the model exactly as the
analytic partition function assumes; the local log-normalizer depends on
the parameters only through that scale.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .exceptions import InvalidStateError
from .models import LocalState, ModelSpec
from .partition import PartitionTable
from .tempering import TemperatureGrid

__all__ = [
    "FmmConfig",
    "FmmGlobal",
    "FmmLocal",
    "FmmModel",
    "fmm_generate",
    "fmm_log_partition",
    "toy_feature_masks",
    "make_toy_features",
]


@dataclass(frozen=True)
class FmmConfig:
    """Component count, data dimension, activation probability, and scales.

    ``variance_convention`` declares whether sigma_n / sigma_mu are standard
    deviations (default) or variances.
    """

    n_components: int
    dim: int
    pi: float
    sigma_n: float
    sigma_mu: float
    variance_convention: str = "stddev"

    def __post_init__(self):
        if not 0.0 < self.pi < 1.0:
            raise ValueError("activation probability must be in (0, 1)")
        if self.sigma_n <= 0 or self.sigma_mu <= 0:
            raise ValueError("scales must be positive")
        if self.variance_convention not in ("stddev", "variance"):
            raise ValueError("variance_convention must be 'stddev' or 'variance'")

    @property
    def noise_var(self) -> float:
        return self.sigma_n ** 2 if self.variance_convention == "stddev" else self.sigma_n

    @property
    def prior_var(self) -> float:
        return self.sigma_mu ** 2 if self.variance_convention == "stddev" else self.sigma_mu


@dataclass
class FmmGlobal:
    """Posterior means and per-component variances of the latent features."""

    m: np.ndarray   # (K, D)
    s2: np.ndarray  # (K,)


class FmmLocal(LocalState):
    """Bernoulli activation responsibilities of one data point."""

    __slots__ = ("nu", "converged")

    def __init__(self, nu, converged=True):
        self.nu = np.asarray(nu, dtype=float)
        self.converged = converged

    def validate(self):
        if not np.all(np.isfinite(self.nu)):
            raise InvalidStateError("nu must be finite")
        if np.any(self.nu < 0) or np.any(self.nu > 1):
            raise InvalidStateError("nu must lie in [0, 1]")


class FmmModel(ModelSpec):
    """ModelSpec implementation for the factorial mixture model."""

    model_id = "fmm"

    def __init__(self, config: FmmConfig):
        self.config = config
        k, d = config.n_components, config.dim
        self._alpha = np.concatenate([np.zeros(k * d), np.full(k, 1.0 / config.prior_var)])

    # -- structure ---------------------------------------------------------

    @property
    def alpha(self):
        return self._alpha

    @property
    def dim_global(self):
        k, d = self.config.n_components, self.config.dim
        return k * d + k

    def unpack_global(self, lam) -> FmmGlobal:
        k, d = self.config.n_components, self.config.dim
        lam = np.asarray(lam, dtype=float)
        h = lam[: k * d].reshape(k, d)
        j = lam[k * d:]
        if np.any(j <= 0):
            raise InvalidStateError("feature precisions must be positive")
        return FmmGlobal(h / j[:, None], 1.0 / j)

    def pack_global(self, state: FmmGlobal) -> np.ndarray:
        j = 1.0 / np.asarray(state.s2, dtype=float)
        h = np.asarray(state.m, dtype=float) * j[:, None]
        return np.concatenate([h.ravel(), j])

    def eval_a_g(self, nat):
        """Log-normalizer of the K independent Gaussian feature factors."""
        k, d = self.config.n_components, self.config.dim
        nat = np.asarray(nat, dtype=float)
        h = nat[: k * d].reshape(k, d)
        j = nat[k * d:]
        if np.any(j <= 0):
            raise ValueError("precision coordinates must be positive")
        return float(np.sum((h ** 2).sum(axis=1) / (2.0 * j) + 0.5 * d * np.log(2.0 * np.pi / j)))

    def eval_a_l(self, beta):
        """Per-datum local log-normalizer on the extended natural parameters.

        The value depends on beta only through the scale of the precision
        coordinate relative to the model's noise precision (the feature-mean
        dependence cancels); at the canonical parameters it is 0.
        """
        beta = np.asarray(beta, dtype=float)
        if beta.shape != (self.config.n_components * self.config.dim + 1,):
            raise ValueError("expected extended local natural parameters (mu..., precision)")
        q = beta[-1]
        if q <= 0 or not np.isfinite(q):
            raise ValueError("precision coordinate must be positive and finite")
        s = (1.0 / self.config.noise_var) / q
        pi = self.config.pi
        k, d = self.config.n_components, self.config.dim
        return float(0.5 * d * np.log(s) + k * np.log(pi ** (1.0 / s) + (1.0 - pi) ** (1.0 / s)))

    def sample_local_nat(self, rng, n):
        k, d = self.config.n_components, self.config.dim
        mu = rng.normal(0.0, np.sqrt(self.config.prior_var), size=(n, k * d))
        prec = np.full((n, 1), 1.0 / self.config.noise_var)
        return np.hstack([mu, prec])

    # -- state management ----------------------------------------------------

    def init_global(self, rng):
        k, d = self.config.n_components, self.config.dim
        m = rng.normal(0.0, np.sqrt(self.config.prior_var), size=(k, d))
        return self.pack_global(FmmGlobal(m, np.full(k, self.config.prior_var)))

    def validate_global(self, lam):
        lam = np.asarray(lam)
        if lam.shape != (self.dim_global,):
            raise InvalidStateError("global state has the wrong shape")
        if not np.all(np.isfinite(lam)):
            raise InvalidStateError("global state must be finite")
        k, d = self.config.n_components, self.config.dim
        if np.any(lam[k * d:] <= 0):
            raise InvalidStateError("feature precisions must stay positive")

    def prepare_global(self, lam):
        g = self.unpack_global(lam)
        return g

    # -- local updates -------------------------------------------------------

    def fit_local(self, datum, lam, inv_t, tol=1e-6, max_iter=100):
        phis, _ = self.fit_local_batch(np.atleast_2d(datum), lam, inv_t, tol, max_iter)
        return phis[0]

    def fit_local_batch(self, data, lam, inv_t, tol=1e-6, max_iter=100, ctx=None):
        """Sweep the activation logits over components to a fixed point.

        logit(nu_nk) = inv_t [ log(pi/(1-pi))
                               + (m_k . r_nk - (||m_k||^2 + D s2_k)/2) / noise_var ]
        with r_nk the residual excluding component k; components are updated
        sequentially against a maintained residual matrix.
        """
        g = ctx if isinstance(ctx, FmmGlobal) else self.prepare_global(lam)
        x = np.atleast_2d(np.asarray(data, dtype=float))
        n, d = x.shape
        k = self.config.n_components
        inv_t = np.broadcast_to(np.asarray(inv_t, dtype=float), (n,))
        pi = self.config.pi
        lp = np.log(pi / (1.0 - pi))
        nv = self.config.noise_var
        half = 0.5 * ((g.m ** 2).sum(axis=1) + d * g.s2)
        nu = np.full((n, k), 0.5)
        resid = x - nu @ g.m
        converged = False
        for _ in range(max_iter):
            max_change = 0.0
            for j in range(k):
                r_j = resid + np.outer(nu[:, j], g.m[j])
                logit = inv_t * (lp + (r_j @ g.m[j] - half[j]) / nv)
                new = expit(logit)
                resid = r_j - np.outer(new, g.m[j])
                max_change = max(max_change, float(np.max(np.abs(new - nu[:, j]))))
                nu[:, j] = new
            if max_change < tol:
                converged = True
                break
        return [FmmLocal(nu[i], converged) for i in range(n)], (0 if converged else n)

    def expected_local_nat_params(self, datum, lam, phi=None):
        """Per-component activation logits at the current responsibilities."""
        g = self.prepare_global(lam)
        x = np.asarray(datum, dtype=float)
        k, d = self.config.n_components, self.config.dim
        nu = phi.nu if phi is not None else np.full(k, 0.5)
        lp = np.log(self.config.pi / (1.0 - self.config.pi))
        nv = self.config.noise_var
        half = 0.5 * ((g.m ** 2).sum(axis=1) + d * g.s2)
        resid = x - nu @ g.m
        out = np.empty(k)
        for j in range(k):
            r_j = resid + nu[j] * g.m[j]
            out[j] = lp + (r_j @ g.m[j] - half[j]) / nv
        return out

    # -- statistics and objective terms ---------------------------------------

    def expected_suff_stats(self, datum, phi, lam):
        """Per-datum statistics [nu_k r_nk / noise_var ..., nu_k / noise_var].

        Residuals are taken against the current global means in ``lam``
        (the local conditional couples the feature factors).
        """
        g = self.unpack_global(lam)
        x = np.asarray(datum, dtype=float)
        nu = phi.nu
        nv = self.config.noise_var
        k = self.config.n_components
        resid = x - nu @ g.m
        h_part = np.empty_like(g.m)
        for j in range(k):
            h_part[j] = nu[j] * (resid + nu[j] * g.m[j]) / nv
        return np.concatenate([h_part.ravel(), nu / nv])

    def lambda_hat(self, batch, phis, lam, weights, scale):
        """Intermediate global estimate with sequential component refresh.

        Components are updated in order against residuals that include the
        already-updated means, so a full-batch update with rho = 1 is exact
        coordinate ascent on the (annealed) objective.
        """
        g = self.unpack_global(lam)
        x = np.atleast_2d(np.asarray(batch, dtype=float))
        nu = np.stack([phi.nu for phi in phis])
        w = np.broadcast_to(np.asarray(weights, dtype=float), (x.shape[0],))
        k, d = self.config.n_components, self.config.dim
        nv = self.config.noise_var
        prior_prec = 1.0 / self.config.prior_var
        wnu = w[:, None] * nu
        m_work = g.m.copy()
        hat_h = np.empty((k, d))
        hat_j = np.empty(k)
        resid = x - nu @ m_work
        for j in range(k):
            r_j = resid + np.outer(nu[:, j], m_work[j])
            hat_h[j] = scale * (wnu[:, j] @ r_j) / nv
            hat_j[j] = prior_prec + scale * wnu[:, j].sum() / nv
            new_mj = hat_h[j] / hat_j[j]
            resid = r_j - np.outer(nu[:, j], new_mj)
            m_work[j] = new_mj
        return np.concatenate([hat_h.ravel(), hat_j])

    def expected_log_lik(self, datum, phi, ctx):
        """E_q[log N(x; sum_k Z_k mu_k, noise_var I)] + E_q[log p(Z | pi)]."""
        g = ctx if isinstance(ctx, FmmGlobal) else self.prepare_global(ctx)
        x = np.asarray(datum, dtype=float)
        nu = phi.nu
        d = self.config.dim
        nv = self.config.noise_var
        gram = g.m @ g.m.T
        diag = np.diag(gram)
        mean = nu @ g.m
        e_sq = (x @ x - 2.0 * x @ mean
                + nu @ (diag + d * g.s2)
                + nu @ gram @ nu - np.dot(nu ** 2, diag))
        gauss = -0.5 * d * np.log(2.0 * np.pi * nv) - 0.5 * e_sq / nv
        pi = self.config.pi
        bern = np.dot(nu, np.log(pi)) + np.dot(1.0 - nu, np.log(1.0 - pi))
        return float(gauss + bern)

    def local_extra_terms(self, datum, phi):
        """Bernoulli entropies of the activation responsibilities."""
        nu = phi.nu
        with np.errstate(divide="ignore", invalid="ignore"):
            h = -(np.where(nu > 0, nu * np.log(np.maximum(nu, 1e-300)), 0.0)
                  + np.where(nu < 1, (1 - nu) * np.log(np.maximum(1 - nu, 1e-300)), 0.0))
        return float(h.sum())

    def global_kl(self, lam):
        """sum_k KL(N(m_k, s2_k I) || N(0, prior_var I))."""
        g = self.unpack_global(lam)
        d = self.config.dim
        pv = self.config.prior_var
        kl = 0.5 * (d * g.s2 / pv + (g.m ** 2).sum(axis=1) / pv
                    - d - d * np.log(g.s2 / pv))
        return float(kl.sum())


def fmm_generate(config: FmmConfig, true_features: np.ndarray, n: int, seed: int = 0) -> np.ndarray:
    """Draw ``n`` data points X = Z features + eps from the generative model."""
    features = np.asarray(true_features, dtype=float)
    if features.shape != (config.n_components, config.dim):
        raise ValueError("true features must be (n_components, dim)")
    rng = np.random.default_rng(seed)
    z = rng.random((n, config.n_components)) < config.pi
    eps = rng.normal(0.0, np.sqrt(config.noise_var), size=(n, config.dim))
    return z @ features + eps


def fmm_log_partition(config: FmmConfig, n_data: int, grid: TemperatureGrid) -> PartitionTable:
    """Analytic tempered partition function of the factorial mixture model.

    log C(T) = (1/2) N D log T + N K log(pi^{1/T} + (1-pi)^{1/T}); exact,
    so the standard errors are identically zero.
    """
    pi = config.pi
    log_c = np.zeros(grid.m)
    for j, t in enumerate(grid.temps):
        if t == 1.0:
            continue
        log_c[j] = (0.5 * n_data * config.dim * np.log(t)
                    + n_data * config.n_components
                    * np.log(pi ** (1.0 / t) + (1.0 - pi) ** (1.0 / t)))
    meta = {
        "method": "analytic", "model": "fmm", "N": n_data,
        "K": config.n_components, "D": config.dim, "pi": pi,
    }
    return PartitionTable(grid, log_c, np.zeros(grid.m), meta)


def toy_feature_masks(path=None) -> np.ndarray:
    """Load the 8 binary 4x4 feature masks (shipped as a text asset)."""
    if path is None:
        ref = importlib.resources.files("tempervi") / "assets" / "fmm_toy_features.txt"
        text = ref.read_text(encoding="utf-8")
    else:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    rows = [line.strip() for line in text.splitlines() if line.strip()]
    masks = np.array([[int(c) for c in row] for row in rows], dtype=float)
    return masks


def make_toy_features(rng: np.random.Generator, masks: np.ndarray = None,
                      low: float = 0.5, high: float = 1.0) -> np.ndarray:
    """Weight each binary mask with a uniform draw from [low, high]."""
    if masks is None:
        masks = toy_feature_masks()
    weights = rng.uniform(low, high, size=masks.shape[0])
    return masks * weights[:, None]
