"""Batch variational latent Dirichlet allocation.

Used to warm-start the dynamic topic model and as the single-slice reference
path. Documents are (term_ids, counts) pairs over a fixed vocabulary.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.special import digamma, gammaln
from sklearn.base import BaseEstimator

Doc = tuple[np.ndarray, np.ndarray]


def make_doc(term_ids: Sequence[int], counts: Sequence[int]) -> Doc:
    ids = np.asarray(term_ids, dtype=np.int64)
    cts = np.asarray(counts, dtype=np.float64)
    if ids.shape != cts.shape or ids.ndim != 1:
        raise ValueError("term ids and counts must be aligned 1-d arrays")
    if ids.size and len(np.unique(ids)) != ids.size:
        raise ValueError("term ids within a document must be unique")
    return ids, cts


def _doc_bound(gamma, elog_theta, phi, log_phi, counts, log_beta_doc, alpha):
    """Per-document contribution to the variational bound."""
    k = gamma.size
    bound = gammaln(k * alpha) - k * gammaln(alpha)
    bound += np.sum(gammaln(gamma)) - gammaln(np.sum(gamma))
    bound += np.sum((alpha - gamma) * elog_theta)
    # Token terms: E[log p(w, z | theta, beta)] - E[log q(z)].
    inner = elog_theta[None, :] + log_beta_doc - log_phi
    bound += np.sum(counts[:, None] * phi * np.where(phi > 0, inner, 0.0))
    return bound


def _infer_doc(ids, counts, log_beta, alpha, gamma0=None, max_iters=50, tol=1e-8):
    """Coordinate ascent on (gamma, phi) for one document. Returns
    (gamma, phi, bound). Monotone from any starting gamma because each update
    is an exact coordinate maximizer."""
    k = log_beta.shape[0]
    log_beta_doc = log_beta[:, ids].T  # (n_terms, K)
    gamma = np.full(k, alpha + counts.sum() / k) if gamma0 is None else gamma0.copy()
    bound = -np.inf
    for _ in range(max_iters):
        elog_theta = digamma(gamma) - digamma(gamma.sum())
        log_phi = elog_theta[None, :] + log_beta_doc
        log_phi -= log_phi.max(axis=1, keepdims=True)
        phi = np.exp(log_phi)
        norm = phi.sum(axis=1, keepdims=True)
        phi /= norm
        log_phi -= np.log(norm)
        gamma = alpha + phi.T @ counts
        elog_theta = digamma(gamma) - digamma(gamma.sum())
        new_bound = _doc_bound(gamma, elog_theta, phi, log_phi, counts, log_beta_doc, alpha)
        if bound != -np.inf and abs(new_bound - bound) <= tol * max(1.0, abs(bound)):
            bound = new_bound
            break
        bound = new_bound
    return gamma, phi, bound


class VariationalLda(BaseEstimator):
    """Plain batch VB-LDA with a Dirichlet(eta) prior on topic-word weights."""

    def __init__(
        self,
        n_topics=2,
        alpha=0.01,
        eta=0.01,
        passes=20,
        tol=1e-4,
        doc_max_iters=50,
        doc_tol=1e-8,
        seed=0,
    ):
        self.n_topics = n_topics
        self.alpha = alpha
        self.eta = eta
        self.passes = passes
        self.tol = tol
        self.doc_max_iters = doc_max_iters
        self.doc_tol = doc_tol
        self.seed = seed

    def fit(self, docs: Sequence[Doc], n_terms: int | None = None):
        if not docs:
            raise ValueError("empty corpus")
        if n_terms is None:
            n_terms = int(max(ids.max() for ids, _ in docs if ids.size)) + 1
        k = self.n_topics
        rng = np.random.default_rng(self.seed)
        lam = self.eta + rng.gamma(100.0, 1.0 / 100.0, size=(k, n_terms))
        gammas = [None] * len(docs)
        trace = []
        for _ in range(self.passes):
            elog_beta = digamma(lam) - digamma(lam.sum(axis=1, keepdims=True))
            sstats = np.zeros((k, n_terms))
            bound = 0.0
            for d, (ids, counts) in enumerate(docs):
                gamma, phi, doc_b = _infer_doc(
                    ids, counts, elog_beta, self.alpha, gammas[d],
                    self.doc_max_iters, self.doc_tol,
                )
                gammas[d] = gamma
                bound += doc_b
                np.add.at(sstats, (slice(None), ids), (counts[:, None] * phi).T)
            # Dirichlet prior/entropy terms for q(beta).
            bound += np.sum((self.eta - lam) * elog_beta)
            bound += np.sum(gammaln(lam)) - np.sum(gammaln(lam.sum(axis=1)))
            bound += k * (gammaln(n_terms * self.eta) - n_terms * gammaln(self.eta))
            trace.append(float(bound))
            if len(trace) > 1 and abs(trace[-1] - trace[-2]) <= self.tol * abs(trace[-2]):
                lam = self.eta + sstats
                break
            lam = self.eta + sstats
        self.lambda_ = lam
        self.sstats_ = sstats
        self.topic_word_ = lam / lam.sum(axis=1, keepdims=True)
        self.doc_topic_ = np.vstack([g / g.sum() for g in gammas])
        self.elbo_trace_ = trace
        self.n_terms_ = n_terms
        return self

    def fold_in(self, docs: Sequence[Doc]) -> np.ndarray:
        """Infer document-topic proportions for unseen docs with topics fixed."""
        elog_beta = digamma(self.lambda_) - digamma(self.lambda_.sum(axis=1, keepdims=True))
        thetas = []
        for ids, counts in docs:
            gamma, _, _ = _infer_doc(
                ids, counts, elog_beta, self.alpha, None, self.doc_max_iters, self.doc_tol
            )
            thetas.append(gamma / gamma.sum())
        return np.vstack(thetas)

    def per_word_log_likelihood(self, docs: Sequence[Doc], thetas: np.ndarray | None = None) -> float:
        """Mean log p(token) under theta_d per document and the posterior-mean topics."""
        if thetas is None:
            thetas = self.fold_in(docs)
        total_ll = 0.0
        total_tokens = 0.0
        for (ids, counts), theta in zip(docs, thetas):
            p = theta @ self.topic_word_[:, ids]
            total_ll += float(counts @ np.log(p))
            total_tokens += float(counts.sum())
        if total_tokens == 0:
            raise ValueError("no tokens to evaluate")
        return total_ll / total_tokens
