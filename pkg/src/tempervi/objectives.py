"""Variational objectives: ELBO, annealed ELBO, and tempered ELBO.

These are evaluatable diagnostics, not the optimization path.  All values
are in nats.  The entropy convention 0*log(0) = 0 applies to every
multinomial factor.
"""

from __future__ import annotations

import math

import numpy as np

from .exceptions import ConfigurationError
from .tempering import TemperaturePosterior, expected_inverse_temperature

__all__ = ["elbo", "annealed_elbo", "tempered_elbo"]


def _local_sums(model, data, phis, lam):
    ctx = model.prepare_global(lam)
    loglik = 0.0
    extra = 0.0
    for datum, phi in zip(data, phis):
        phi.validate()
        loglik += model.expected_log_lik(datum, phi, ctx)
        extra += model.local_extra_terms(datum, phi)
    return loglik, extra


def annealed_elbo(model, data, lam, phis, temperature: float) -> float:
    """Annealed ELBO at fixed temperature T >= 1.

    Prior and entropy terms are untempered; the summed expected
    log-likelihood is divided by T.  No partition-function term appears
    (constants do not affect the variational objective).  At T = 1 this is
    the standard ELBO.
    """
    if not temperature >= 1.0:
        raise ValueError("temperature must be >= 1")
    model.validate_global(lam)
    inv_t = 0.0 if math.isinf(temperature) else 1.0 / temperature
    loglik, extra = _local_sums(model, data, phis, lam)
    return -model.global_kl(lam) + inv_t * loglik + extra


def elbo(model, data, lam, phis) -> float:
    """Evidence lower bound E_q[log p(beta, z, x)] - E_q[log q(beta, z)]."""
    return annealed_elbo(model, data, lam, phis, 1.0)


def tempered_elbo(model, data, lam, phis, post: TemperaturePosterior,
                  table, pi=None) -> float:
    """Tempered ELBO for the model extended with a global temperature variable.

    Adds to the annealed decomposition the temperature terms
    E_q[log p(y)] - E_q[log q(y)] - E_q[log C(T_y)], with the likelihood sum
    weighted by E_q[1/T_y].  ``pi`` defaults to the prior weights stored on
    the posterior.
    """
    if not table.grid.same_as(post.grid):
        raise ConfigurationError("partition table grid does not match the posterior grid")
    model.validate_global(lam)
    pi = post.pi if pi is None else np.asarray(pi, dtype=float)
    if pi.shape != (post.grid.m,):
        raise ConfigurationError("prior weights must match the grid")
    loglik, extra = _local_sums(model, data, phis, lam)
    r = post.r
    nz = r > 0.0
    temp_terms = float(np.dot(r[nz], np.log(pi[nz]) - table.log_c[nz] - np.log(r[nz])))
    e_inv_t = expected_inverse_temperature(post)
    return -model.global_kl(lam) + e_inv_t * loglik + extra + temp_terms
