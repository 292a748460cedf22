"""Estimation of the tempered partition function log C(T) over a ladder.

Three estimators are provided: a generic Monte Carlo estimator that
reduces the partition integral to an expectation over prior draws of the
global variables, a MAP point approximation of the same integrand, and a
nested Monte Carlo estimator specific to LDA together with its Jensen
bounds.  Every estimator returns exactly 0 at T = 1.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import logsumexp

from .exceptions import ConfigurationError, EstimationError
from .tempering import TemperatureGrid

__all__ = [
    "PartitionTable",
    "JensenBounds",
    "mc_log_partition",
    "map_log_partition",
    "lda_log_partition",
    "lda_jensen_bounds",
    "load_partition_table",
]

_FMT = "%.17g"  # enough significant digits for a bit-exact float64 round trip


def _log_mean_exp(exponents: np.ndarray):
    """log of the sample mean of exp(exponents), with delta-method std error.

    The standard error of log(m_hat) is se(m_hat)/m_hat, computed entirely
    in the log domain.  Degenerate samples (all equal, or a single sample)
    yield a zero standard error.
    """
    e = np.asarray(exponents, dtype=float)
    n = e.size
    if np.all(np.isneginf(e)):
        raise EstimationError("all Monte Carlo exponents are -inf")
    log_mean = logsumexp(e) - np.log(n)
    if n < 2:
        return float(log_mean), 0.0
    log_mean_sq = logsumexp(2.0 * e) - np.log(n)  # log E[w^2]
    gap = log_mean_sq - 2.0 * log_mean            # >= 0 by Jensen
    if gap <= 0.0:
        return float(log_mean), 0.0
    # unbiased variance: n/(n-1) * (E[w^2] - E[w]^2)
    log_var = 2.0 * log_mean + np.log(np.expm1(gap)) + np.log(n / (n - 1.0))
    se_log = np.exp(0.5 * log_var - 0.5 * np.log(n) - log_mean)
    return float(log_mean), float(se_log)


@dataclass(frozen=True)
class PartitionTable:
    """Precomputed (T_m, log C(T_m), std err) triples with provenance metadata."""

    grid: TemperatureGrid
    log_c: np.ndarray
    std_err: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        log_c = np.asarray(self.log_c, dtype=float)
        std_err = np.asarray(self.std_err, dtype=float)
        object.__setattr__(self, "log_c", log_c)
        object.__setattr__(self, "std_err", std_err)
        if log_c.shape != (self.grid.m,) or std_err.shape != (self.grid.m,):
            raise ValueError("log_c and std_err must have one entry per temperature")
        if not (np.all(np.isfinite(log_c)) and np.all(np.isfinite(std_err))):
            raise ValueError("partition table entries must be finite")
        if self.grid.temps[0] == 1.0 and log_c[0] != 0.0:
            raise ValueError("log C(1) must be exactly 0")

    def meta_hash(self) -> str:
        items = sorted((str(k), str(v)) for k, v in self.meta.items() if k != "hash")
        blob = "\n".join(f"{k}={v}" for k, v in items).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def save(self, path):
        lines = []
        for key in sorted(self.meta):
            if key == "hash":
                continue
            lines.append(f"# {key}={self.meta[key]}")
        lines.append(f"# hash={self.meta_hash()}")
        for t, c, s in zip(self.grid.temps, self.log_c, self.std_err):
            lines.append(f"{_FMT % t},{_FMT % c},{_FMT % s}")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")


def load_partition_table(path, spacing="exponential") -> PartitionTable:
    """Parse a partition-table file written by :meth:`PartitionTable.save`."""
    meta = {}
    temps, log_c, std_err = [], [], []
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key.strip()] = value
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise ConfigurationError(f"bad partition table row: {line!r}")
            temps.append(float(parts[0]))
            log_c.append(float(parts[1]))
            std_err.append(float(parts[2]))
    stored_hash = meta.pop("hash", None)
    table = PartitionTable(TemperatureGrid(np.array(temps), spacing=meta.get("spacing", spacing)),
                           np.array(log_c), np.array(std_err), meta)
    if stored_hash is not None and stored_hash != table.meta_hash():
        raise ConfigurationError("partition table metadata hash mismatch")
    return table


def mc_log_partition(model, n_data: int, grid: TemperatureGrid,
                     n_samples: int = 100, seed: int = 0) -> PartitionTable:
    """Monte Carlo estimate of log C(T) from prior draws of the globals.

    For each T != 1 the integrand exponent is
    -N a_l(beta)/T + N a_l(beta/T) per prior sample beta; the same samples
    are reused across all temperatures (common random numbers) so the table
    is smooth in T.  T = 1 returns exactly 0.
    """
    if n_samples < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    betas = model.sample_local_nat(rng, n_samples)
    a_base = np.array([model.eval_a_l(b) for b in betas])
    log_c = np.zeros(grid.m)
    std_err = np.zeros(grid.m)
    for j, t in enumerate(grid.temps):
        if t == 1.0:
            continue
        a_temp = np.array([model.eval_a_l(b / t) for b in betas])
        exponents = -n_data * a_base / t + n_data * a_temp
        log_c[j], std_err[j] = _log_mean_exp(exponents)
    meta = {
        "method": "mc", "model": model.model_id, "N": n_data,
        "n_samples": n_samples, "seed": seed,
    }
    return PartitionTable(grid, log_c, std_err, meta)


def map_log_partition(model, n_data: int, grid: TemperatureGrid,
                      beta_star: np.ndarray) -> PartitionTable:
    """MAP point approximation: log C(T) ~ N (a_l(beta*/T) - a_l(beta*)/T).

    This is the Monte Carlo integrand's exponent evaluated at a single
    point ``beta_star`` (e.g. the prior mode); no accuracy guarantee.
    The signs follow the integrand, so the approximation is consistent
    with :func:`mc_log_partition`.
    """
    beta_star = np.asarray(beta_star, dtype=float)
    a_base = model.eval_a_l(beta_star)  # raises on invalid beta_star
    log_c = np.zeros(grid.m)
    for j, t in enumerate(grid.temps):
        if t == 1.0:
            continue
        log_c[j] = n_data * (model.eval_a_l(beta_star / t) - a_base / t)
    meta = {
        "method": "map", "model": model.model_id, "N": n_data,
        "beta_star": ";".join(_FMT % v for v in beta_star.ravel()[:64]),
    }
    return PartitionTable(grid, log_c, np.zeros(grid.m), meta)


def _lda_log_probs(lda_config, n_beta, n_theta, seed):
    """Shared prior draws for the nested LDA estimators.

    Returns log p[s, j, v] = log sum_k theta_j,k beta_s,k,v for beta drawn
    from Dir(eta)^K and theta drawn from Dir(alpha).
    """
    rng = np.random.default_rng(seed)
    k, v = lda_config.n_topics, lda_config.vocab_size
    betas = rng.dirichlet(np.full(v, lda_config.eta), size=(n_beta, k))
    thetas = rng.dirichlet(np.full(k, lda_config.alpha), size=n_theta)
    mix = np.einsum("jk,skv->sjv", thetas, betas)
    return np.log(np.maximum(mix, np.finfo(float).tiny))


def _lda_meta(lda_config, n_per_doc, n_docs, n_beta, n_theta, seed, method):
    return {
        "method": method, "model": "lda", "K": lda_config.n_topics,
        "V": lda_config.vocab_size, "alpha": lda_config.alpha, "eta": lda_config.eta,
        "N": n_per_doc, "D": n_docs, "n_beta": n_beta, "n_theta": n_theta, "seed": seed,
    }


def lda_log_partition(lda_config, n_per_doc: float, n_docs: int, grid: TemperatureGrid,
                      n_beta: int = 100, n_theta: int = 100, seed: int = 0) -> PartitionTable:
    """Nested Monte Carlo estimator of the LDA tempered partition function.

    Outer samples are topic matrices beta ~ Dir(eta)^K, inner samples are
    topic proportions theta ~ Dir(alpha); ``n_per_doc`` is the approximate
    number of words per document (total words / documents).  Both loops are
    carried out with log-sum-exp in the log domain.
    """
    if n_beta < 1 or n_theta < 1:
        raise ValueError("need at least one sample per stage")
    log_p = _lda_log_probs(lda_config, n_beta, n_theta, seed)
    log_c = np.zeros(grid.m)
    std_err = np.zeros(grid.m)
    for j, t in enumerate(grid.temps):
        if t == 1.0:
            continue
        inner = n_per_doc * logsumexp(log_p / t, axis=2)          # (n_beta, n_theta)
        per_beta = n_docs * (logsumexp(inner, axis=1) - np.log(n_theta))
        if not np.all(np.isfinite(per_beta)):
            raise EstimationError("nested LDA estimator overflowed")
        log_c[j], std_err[j] = _log_mean_exp(per_beta)
    meta = _lda_meta(lda_config, n_per_doc, n_docs, n_beta, n_theta, seed, "lda-nested")
    return PartitionTable(grid, log_c, std_err, meta)


class JensenBounds(NamedTuple):
    """Jensen bounds on log C(T) with their Monte Carlo standard errors."""

    lower: np.ndarray
    upper: np.ndarray
    lower_se: np.ndarray
    upper_se: np.ndarray


def lda_jensen_bounds(lda_config, n_per_doc: float, n_docs: int, grid: TemperatureGrid,
                      n_samples: int = 100, seed: int = 0) -> JensenBounds:
    """Jensen sandwich for the LDA log partition function.

    lower = N D E[log sum_v (sum_k theta_k beta_kv)^{1/T}] and
    upper = N D log E[sum_v (sum_k theta_k beta_kv)^{1/T}], both estimated
    from shared samples, so lower <= upper holds deterministically on the
    empirical measure.  Both scale linearly in N*D.
    """
    log_p = _lda_log_probs(lda_config, n_samples, n_samples, seed)
    nd = n_per_doc * n_docs
    lower = np.zeros(grid.m)
    upper = np.zeros(grid.m)
    lower_se = np.zeros(grid.m)
    upper_se = np.zeros(grid.m)
    for j, t in enumerate(grid.temps):
        if t == 1.0:
            continue
        log_w = logsumexp(log_p / t, axis=2).ravel()   # log sum_v p^(1/T), per sample
        n = log_w.size
        lower[j] = nd * log_w.mean()
        lower_se[j] = nd * log_w.std(ddof=1) / np.sqrt(n)
        lm, ls = _log_mean_exp(log_w)
        upper[j] = nd * lm
        upper_se[j] = nd * ls
    return JensenBounds(lower, upper, lower_se, upper_se)
