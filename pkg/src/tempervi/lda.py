"""Latent Dirichlet allocation instantiation of the CCEF model contract.

Documents are bags of word-type counts; responsibilities are stored per
word type (weighted by counts), not per token.  The global variational
state is a K x V matrix of Dirichlet parameters, handled as a flat vector
by the generic engine.  Held-out documents are always fitted with the
non-tempered model (inv_t = 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp, psi

from .exceptions import InvalidStateError
from .models import LocalState, ModelSpec

__all__ = ["LdaConfig", "LdaGlobal", "LdaLocal", "LdaModel", "dirichlet_expected_log"]


def dirichlet_expected_log(params):
    """E[log x] under Dirichlet(params): psi(params) - psi(sum params).

    Accepts a vector or a matrix of row-wise Dirichlet parameters.
    """
    params = np.asarray(params, dtype=float)
    if np.any(params <= 0) or not np.all(np.isfinite(params)):
        raise ValueError("Dirichlet parameters must be positive and finite")
    if params.ndim == 1:
        return psi(params) - psi(params.sum())
    return psi(params) - psi(params.sum(axis=-1, keepdims=True))


@dataclass(frozen=True)
class LdaConfig:
    """Topic count, vocabulary size, and symmetric Dirichlet hyperparameters."""

    n_topics: int
    vocab_size: int
    alpha: float
    eta: float

    def __post_init__(self):
        if self.n_topics < 1 or self.vocab_size < 1:
            raise ValueError("need at least one topic and one vocabulary entry")
        if self.alpha <= 0 or self.eta <= 0:
            raise ValueError("Dirichlet hyperparameters must be positive")


@dataclass
class LdaGlobal:
    """K x V Dirichlet parameters of the per-topic word distributions."""

    lam: np.ndarray  # (K, V)


class LdaLocal(LocalState):
    """Per-document state: gamma over topics, count-weighted responsibilities.

    ``phi`` has one simplex row per distinct word type in the document,
    aligned with ``ids``/``counts``.
    """

    __slots__ = ("gamma", "phi", "ids", "counts", "converged")

    def __init__(self, gamma, phi, ids, counts, converged=True):
        self.gamma = np.asarray(gamma, dtype=float)
        self.phi = np.asarray(phi, dtype=float)
        self.ids = np.asarray(ids, dtype=np.int64)
        self.counts = np.asarray(counts, dtype=float)
        self.converged = converged

    def validate(self):
        if np.any(self.gamma <= 0) or not np.all(np.isfinite(self.gamma)):
            raise InvalidStateError("gamma must be positive and finite")
        if self.phi.size:
            if not np.all(np.isfinite(self.phi)):
                raise InvalidStateError("phi must be finite")
            if np.max(np.abs(self.phi.sum(axis=1) - 1.0)) > 1e-12:
                raise InvalidStateError("phi rows must sum to 1 within 1e-12")


class LdaModel(ModelSpec):
    """ModelSpec implementation for LDA."""

    model_id = "lda"

    def __init__(self, config: LdaConfig):
        self.config = config
        k, v = config.n_topics, config.vocab_size
        self._alpha = np.full(k * v, config.eta)
        # constant pieces of the theta prior term
        self._log_b_alpha = gammaln(k * config.alpha) - k * gammaln(config.alpha)

    # -- structure ---------------------------------------------------------

    @property
    def alpha(self):
        return self._alpha

    @property
    def dim_global(self):
        return self.config.n_topics * self.config.vocab_size

    def to_matrix(self, lam):
        return np.asarray(lam).reshape(self.config.n_topics, self.config.vocab_size)

    def eval_a_g(self, nat):
        """Log-normalizer of a product of Dirichlets with parameter rows ``nat``."""
        mat = self.to_matrix(nat)
        if np.any(mat <= 0):
            raise ValueError("Dirichlet natural parameters must be positive")
        return float(np.sum(gammaln(mat)) - np.sum(gammaln(mat.sum(axis=1))))

    # -- state management ----------------------------------------------------

    def init_global(self, rng):
        """Gamma(100, 0.01) entries: mean 1, sd 0.1 (standard online-LDA seeding)."""
        k, v = self.config.n_topics, self.config.vocab_size
        return rng.gamma(100.0, 0.01, size=(k, v)).ravel()

    def validate_global(self, lam):
        lam = np.asarray(lam)
        if lam.shape not in ((self.dim_global,), (self.config.n_topics, self.config.vocab_size)):
            raise InvalidStateError("global state has the wrong shape")
        if np.any(lam <= 0) or not np.all(np.isfinite(lam)):
            raise InvalidStateError("Dirichlet parameters must stay strictly positive")

    def prepare_global(self, lam):
        return dirichlet_expected_log(self.to_matrix(lam))  # E[log beta], (K, V)

    # -- local updates -------------------------------------------------------

    def fit_local(self, datum, lam, inv_t, tol=1e-6, max_iter=100):
        return self._fit_local_ctx(datum, self.prepare_global(lam), inv_t, tol, max_iter)

    def _fit_local_ctx(self, doc, elog_beta, inv_t, tol, max_iter):
        """Alternate phi and gamma to a fixed point at fixed inverse temperature.

        phi_vk \\propto exp{ inv_t (E[log theta_k] + E[log beta_kv]) } and
        gamma_k = alpha + inv_t sum_v n_v phi_vk.
        """
        k = self.config.n_topics
        a = self.config.alpha
        ids = np.asarray(doc.ids, dtype=np.int64)
        counts = np.asarray(doc.counts, dtype=float)
        if ids.size == 0:
            return LdaLocal(np.full(k, a), np.zeros((0, k)), ids, counts)
        eb = elog_beta[:, ids].T  # (nnz, K)
        n_d = counts.sum()
        gamma = np.full(k, a + inv_t * n_d / k)
        phi = np.full((ids.size, k), 1.0 / k)
        converged = False
        for _ in range(max_iter):
            elog_theta = psi(gamma) - psi(gamma.sum())
            logits = inv_t * (elog_theta[None, :] + eb)
            logits -= logits.max(axis=1, keepdims=True)
            phi = np.exp(logits)
            phi /= phi.sum(axis=1, keepdims=True)
            gamma_new = a + inv_t * (counts @ phi)
            change = np.abs(gamma_new - gamma).mean() / max(np.abs(gamma_new).mean(), 1e-300)
            gamma = gamma_new
            if change < tol:
                converged = True
                break
        return LdaLocal(gamma, phi, ids, counts, converged)

    def expected_local_nat_params(self, datum, lam, phi=None):
        """Natural parameters of the word-assignment factors: E[log theta] + E[log beta].

        The theta part comes from the coupled gamma factor; without a fitted
        local state it is evaluated at gamma = alpha (fresh prior state).
        """
        elog_beta = self.prepare_global(lam)
        gamma = phi.gamma if phi is not None else np.full(self.config.n_topics, self.config.alpha)
        elog_theta = psi(gamma) - psi(gamma.sum())
        return elog_theta[None, :] + elog_beta[:, np.asarray(datum.ids, dtype=np.int64)].T

    # -- statistics and objective terms ---------------------------------------

    def expected_suff_stats(self, datum, phi, lam=None):
        """Count-weighted responsibilities scattered into a K x V matrix (flattened).

        Temperature scaling is deliberately applied by the engine, not here.
        """
        k, v = self.config.n_topics, self.config.vocab_size
        stats = np.zeros((k, v))
        if phi.ids.size:
            np.add.at(stats.T, phi.ids, phi.counts[:, None] * phi.phi)
        return stats.ravel()

    def global_stats(self, datum, phi):
        """Sparse form of the expected sufficient statistics: (ids, n_v * phi_vk)."""
        return phi.ids, phi.counts[:, None] * phi.phi

    def lambda_hat(self, batch, phis, lam, weights, scale):
        k, v = self.config.n_topics, self.config.vocab_size
        acc = np.zeros((v, k))
        w = np.broadcast_to(np.asarray(weights, dtype=float), (len(batch),))
        for phi, wi in zip(phis, w):
            if phi.ids.size:
                np.add.at(acc, phi.ids, (wi * phi.counts)[:, None] * phi.phi)
        return self._alpha + scale * acc.T.ravel()

    def expected_log_lik(self, datum, phi, ctx):
        """sum_vk n_v phi_vk (E[log theta_k] + E[log beta_kv]) for one document."""
        if phi.ids.size == 0:
            return 0.0
        elog_beta = ctx if isinstance(ctx, np.ndarray) and ctx.ndim == 2 else self.prepare_global(ctx)
        elog_theta = psi(phi.gamma) - psi(phi.gamma.sum())
        eb = elog_beta[:, phi.ids].T
        return float(np.sum(phi.counts[:, None] * phi.phi * (elog_theta[None, :] + eb)))

    def local_extra_terms(self, datum, phi):
        """Untempered local terms: E[log p(theta|alpha)] - E[log q(theta)] + H(q(z))."""
        a = self.config.alpha
        gamma = phi.gamma
        elog_theta = psi(gamma) - psi(gamma.sum())
        prior = self._log_b_alpha + (a - 1.0) * elog_theta.sum()
        ent_q_theta = (gammaln(gamma).sum() - gammaln(gamma.sum())
                       - np.dot(gamma - 1.0, elog_theta))
        h_z = 0.0
        if phi.ids.size:
            p = phi.phi
            h_z = -float(np.sum(phi.counts[:, None] * np.where(p > 0, p * np.log(np.maximum(p, 1e-300)), 0.0)))
        return float(prior + ent_q_theta + h_z)

    def global_kl(self, lam):
        """sum_k KL(Dir(lam_k) || Dir(eta 1)) over topics."""
        mat = self.to_matrix(lam)
        k, v = mat.shape
        eta = self.config.eta
        elog = dirichlet_expected_log(mat)
        kl = (gammaln(mat.sum(axis=1)) - gammaln(mat).sum(axis=1)
              - gammaln(v * eta) + v * gammaln(eta)
              + ((mat - eta) * elog).sum(axis=1))
        return float(kl.sum())

    # -- local variational tempering -------------------------------------------

    def prepare_tempered(self, lam, grid):
        """Per-temperature log-softmax of E[log beta]/T_m, shared across a batch.

        Row k of entry m is the renormalized tempered word log-probability
        vector of topic k, the plug-in for E[log p(w | z=k, beta/T_m)].
        """
        elog_beta = self.prepare_global(lam)
        scaled = elog_beta[None, :, :] / grid.temps[:, None, None]
        return scaled - logsumexp(scaled, axis=2, keepdims=True)  # (M, K, V)

    def expected_tempered_loglik(self, datum, phi, lam, grid, tempered_ctx=None):
        """E_q[log p(x_i, z_i | beta/T_m)] per grid temperature.

        Uses the assignment-level statistic with the topic-word distributions
        tempered and renormalized; the theta contribution is untempered
        (theta is local).
        """
        if tempered_ctx is None:
            tempered_ctx = self.prepare_tempered(lam, grid)
        if phi.ids.size == 0:
            return np.zeros(grid.m)
        elog_theta = psi(phi.gamma) - psi(phi.gamma.sum())
        wphi = phi.counts[:, None] * phi.phi                  # (nnz, K)
        theta_part = float(np.sum(wphi * elog_theta[None, :]))
        beta_part = np.einsum("nk,mkn->m", wphi, tempered_ctx[:, :, phi.ids])
        return theta_part + beta_part
