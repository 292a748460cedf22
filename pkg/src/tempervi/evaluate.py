"""Held-out evaluation: document completion with per-word predictive likelihood.

Half of each test document's tokens (uniformly chosen) form the observed
half used to fit the topic proportions with the non-tempered model; the
remaining tokens are scored under the posterior-mean mixture.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .corpus import Corpus, Document, _make_document
from .exceptions import EvaluationError

__all__ = ["heldout_split", "predictive_loglik", "worker_count"]


def worker_count() -> int:
    """Worker cap from TEMPERVI_THREADS (default 1: serial, always deterministic)."""
    value = os.environ.get("TEMPERVI_THREADS", "1")
    try:
        return max(1, int(value))
    except ValueError:
        return 1


def heldout_split(doc: Document, seed) -> tuple:
    """Token-level uniform split of a document into observed and held halves.

    ceil(N_d / 2) tokens are observed; deterministic given the seed.  A
    one-token document keeps its token on the observed side (empty held
    half; such documents are skipped in scoring).
    """
    tokens = np.repeat(doc.ids, doc.counts.astype(np.int64))
    if tokens.size == 0:
        raise ValueError("cannot split an empty document")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(tokens.size)
    n_obs = math.ceil(tokens.size / 2)

    def collect(tok):
        if tok.size == 0:
            return Document(np.zeros(0, dtype=np.int64), np.zeros(0))
        ids, counts = np.unique(tok, return_counts=True)
        return _make_document(ids, counts)

    return collect(tokens[perm[:n_obs]]), collect(tokens[perm[n_obs:]])


def predictive_loglik(model, lam, test_corpus: Corpus, seed: int = 0,
                      tol: float = 1e-6, max_iter: int = 100) -> float:
    """Average predictive log-probability per held-out word, in nats.

    For each test document: fit q(theta) on the observed half at T = 1,
    then score each held word w as log sum_k E[theta_k] E[beta_kw] with
    Dirichlet means.  Documents with an empty held half are skipped; if all
    are, evaluation fails.  Per-document work is independent and gathered
    in document order, so results do not depend on the worker count.
    """
    lam_mat = model.to_matrix(lam)
    lam_mean = lam_mat / lam_mat.sum(axis=1, keepdims=True)
    ctx = model.prepare_global(lam)
    jobs = [(doc, [seed, i]) for i, doc in enumerate(test_corpus.docs) if doc.ids.size]
    if not jobs:
        raise EvaluationError("no scorable documents in the test corpus")

    def score(job):
        doc, doc_seed = job
        obs, held = heldout_split(doc, doc_seed)
        if held.ids.size == 0:
            return 0.0, 0.0
        local = model._fit_local_ctx(obs, ctx, 1.0, tol, max_iter)
        theta_mean = local.gamma / local.gamma.sum()
        probs = theta_mean @ lam_mean[:, held.ids]
        return float(np.dot(held.counts, np.log(probs))), float(held.counts.sum())

    workers = worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(score, jobs))
    else:
        results = [score(job) for job in jobs]
    total = sum(r[0] for r in results)
    n_held = sum(r[1] for r in results)
    if n_held == 0:
        raise EvaluationError("no held-out words to score")
    return total / n_held
