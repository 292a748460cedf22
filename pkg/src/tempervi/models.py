"""Conditionally conjugate exponential family (CCEF) model abstraction.

A model supplies the prior natural parameters alpha, the sufficient
statistics of its data, the log-normalizers of the global and local
exponential families, and the variational machinery (local fits, global
update statistics, objective terms).  The training engine and the
objective functions are generic over this interface.

Tempering conventions are part of the model definition: ``expected_log_lik``
returns exactly the per-datum statistic that is divided by T in the
annealed objective, while ``local_extra_terms`` collects the untempered
local contributions (local prior terms and entropies of the local
variational factors).
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .exceptions import InvalidStateError

__all__ = ["ModelSpec", "GlobalState", "LocalState"]


@dataclass
class GlobalState:
    """Global variational state: natural-parameter vector and iteration count."""

    lam: np.ndarray
    iteration: int = 0


class LocalState:
    """Base class for per-datum variational states.

    Subclasses hold model-shaped parameters and implement :meth:`validate`,
    which raises :class:`InvalidStateError` if any simplex-shaped component
    fails to normalize within 1e-12 or any entry is non-finite.
    """

    def validate(self):
        raise NotImplementedError


class ModelSpec(ABC):
    """Contract between a CCEF model and the generic engine/objectives."""

    model_id: str = "ccef"

    # -- exponential-family structure -------------------------------------

    @property
    @abstractmethod
    def alpha(self) -> np.ndarray:
        """Prior natural parameters, shape (dim_global,)."""

    @property
    @abstractmethod
    def dim_global(self) -> int:
        """Length of the global natural-parameter vector."""

    @abstractmethod
    def eval_a_g(self, nat: np.ndarray) -> float:
        """Log-normalizer of the global family at natural parameters ``nat``."""

    def eval_a_l(self, beta: np.ndarray) -> float:
        """Log-normalizer of the local family at local natural parameters ``beta``.

        Used by the generic Monte Carlo partition estimator; models that do
        not support it (e.g. LDA, which has a dedicated nested estimator)
        may leave it unimplemented.
        """
        raise NotImplementedError(f"{self.model_id} does not expose a_l")

    def sample_local_nat(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw ``n`` local natural-parameter vectors from the prior over globals."""
        raise NotImplementedError(f"{self.model_id} does not expose a prior sampler")

    # -- variational state management --------------------------------------

    @abstractmethod
    def init_global(self, rng: np.random.Generator) -> np.ndarray:
        """Random initial global natural parameters (perturbation around the prior)."""

    @abstractmethod
    def validate_global(self, lam: np.ndarray):
        """Raise :class:`InvalidStateError` if ``lam`` leaves the valid domain."""

    def prepare_global(self, lam: np.ndarray) -> Any:
        """Precompute per-iteration quantities shared by all local fits."""
        return lam

    @abstractmethod
    def fit_local(self, datum, lam: np.ndarray, inv_t: float,
                  tol: float = 1e-6, max_iter: int = 100) -> LocalState:
        """Fit the local variational factors of one datum at fixed temperature.

        The natural parameters of each tempered local factor are ``inv_t``
        times their non-tempered expectations, iterated to a fixed point
        when the local factors are mutually coupled.
        """

    def fit_local_batch(self, data, lam: np.ndarray, inv_t,
                        tol: float = 1e-6, max_iter: int = 100, ctx=None):
        """Fit locals for a batch; ``inv_t`` may be a scalar or one value per datum.

        Returns (list of LocalState, number of non-converged fits).  The
        default loops over the per-datum fit; models override this with a
        vectorized path.  ``ctx`` may carry a precomputed
        :meth:`prepare_global` result shared across the batch.
        """
        if ctx is None:
            ctx = self.prepare_global(lam)
        inv_t = np.broadcast_to(np.asarray(inv_t, dtype=float), (len(data),))
        out = []
        bad = 0
        for datum, it in zip(data, inv_t):
            phi = self._fit_local_ctx(datum, ctx, float(it), tol, max_iter)
            out.append(phi)
            bad += 0 if getattr(phi, "converged", True) else 1
        return out, bad

    def _fit_local_ctx(self, datum, ctx, inv_t, tol, max_iter) -> LocalState:
        raise NotImplementedError

    # -- statistics and objective terms ------------------------------------

    @abstractmethod
    def expected_suff_stats(self, datum, phi: LocalState, lam: np.ndarray) -> np.ndarray:
        """E_q[t(x_i, z_i)] aligned with the global natural parameters.

        ``lam`` carries the current global state for models whose local
        conditional couples the global factors (needed to form residual
        statistics); conjugate models may ignore it.
        """

    def expected_local_nat_params(self, datum, lam: np.ndarray, phi: LocalState = None):
        """Expected non-tempered natural parameters of the local factors.

        When local factors are mutually coupled the result depends on the
        other factors' current values, taken from ``phi`` (or a fresh
        uniform state when omitted).
        """
        raise NotImplementedError

    @abstractmethod
    def expected_log_lik(self, datum, phi: LocalState, lam: np.ndarray) -> float:
        """Per-datum E_q[log p(x_i, z_i | beta)] in nats (the tempered statistic)."""

    @abstractmethod
    def local_extra_terms(self, datum, phi: LocalState) -> float:
        """Untempered local objective terms: local prior terms plus entropies."""

    @abstractmethod
    def global_kl(self, lam: np.ndarray) -> float:
        """KL(q(beta | lam) || p(beta | alpha)), in nats."""

    def lambda_hat(self, batch, phis, lam: np.ndarray, weights, scale: float) -> np.ndarray:
        """Intermediate global estimate alpha + scale * sum_i w_i E_q[t(x_i, z_i)].

        ``weights`` is a scalar inverse temperature or one weight per batch
        datum; ``scale`` is N/B for the replicate-N-times estimator.
        Models with coupled global factors override this (e.g. with
        sequential residual refreshes).
        """
        w = np.broadcast_to(np.asarray(weights, dtype=float), (len(batch),))
        acc = np.zeros(self.dim_global)
        for datum, phi, wi in zip(batch, phis, w):
            acc += wi * self.expected_suff_stats(datum, phi, lam)
        return self.alpha + scale * acc

    def prepare_tempered(self, lam: np.ndarray, grid):
        """Per-iteration precomputation shared by tempered log-likelihoods (LVT)."""
        return None

    def expected_tempered_loglik(self, datum, phi: LocalState, lam: np.ndarray,
                                 grid, tempered_ctx=None) -> np.ndarray:
        """Per-grid-temperature E_q[log p(x_i, z_i | beta/T_m)] (for LVT)."""
        raise NotImplementedError(f"{self.model_id} does not define tempered likelihoods")
