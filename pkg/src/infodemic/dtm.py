"""Dynamic topic model: per-slice topic-word distributions evolving under a
Gaussian random walk on softmax natural parameters, fit by variational EM.

Per topic, a state space chain holds variational observations ``obs`` (one
value per word and slice). A Kalman forward filter / backward smoother with
observation variance ``nu`` and chain variance ``sigma2`` maps ``obs`` to
posterior means; the smoother is linear, so the Jacobian d mean / d obs is a
single (T, T+1) matrix shared by every word, and the M-step can optimize a
topic's whole obs matrix in one quasi-Newton solve with an exact gradient.

The recorded ELBO is the full variational objective up to additive constants
that depend only on (sigma2, nu): smoother variances are data-independent, so
their entropy terms never change during a fit. Document gammas are
warm-started across passes and an M-step safeguard rejects non-improving
steps, which makes the trace non-decreasing by construction, not by luck.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import optimize
from sklearn.base import BaseEstimator

from .lda import Doc, VariationalLda, _infer_doc

INIT_VARIANCE_MULT = 1000.0


@dataclass(frozen=True)
class DtmConfig:
    n_topics: int = 2
    chain_variance: float = 0.005
    doc_topic_prior: float = 0.01
    obs_variance: float = 0.5
    em_max_passes: int = 20
    elbo_rel_tol: float = 1e-4
    mstep_rounds: int = 2
    mstep_maxiter: int = 60
    doc_max_iters: int = 40
    doc_tol: float = 1e-10
    lda_init_passes: int = 10
    seed: int = 0

    def validate(self) -> None:
        if not 2 <= self.n_topics <= 5:
            raise ValueError("n_topics must be in [2, 5]")
        if self.chain_variance <= 0 or self.obs_variance <= 0:
            raise ValueError("chain_variance and obs_variance must be positive")
        if self.doc_topic_prior <= 0:
            raise ValueError("doc_topic_prior must be positive")
        if self.em_max_passes < 1:
            raise ValueError("em_max_passes must be >= 1")
        if self.elbo_rel_tol <= 0:
            raise ValueError("elbo_rel_tol must be positive")

    def as_dict(self) -> dict:
        return {
            "n_topics": self.n_topics,
            "chain_variance": self.chain_variance,
            "doc_topic_prior": self.doc_topic_prior,
            "obs_variance": self.obs_variance,
            "em_max_passes": self.em_max_passes,
            "elbo_rel_tol": self.elbo_rel_tol,
            "mstep_rounds": self.mstep_rounds,
            "mstep_maxiter": self.mstep_maxiter,
            "doc_max_iters": self.doc_max_iters,
            "doc_tol": self.doc_tol,
            "lda_init_passes": self.lda_init_passes,
            "seed": self.seed,
        }


def _chain_variances(T: int, chain_var: float, obs_var: float) -> tuple[np.ndarray, np.ndarray]:
    """Forward-filtered and smoothed variances. Functions of (sigma2, nu) only."""
    fwd = np.zeros(T + 1)
    fwd[0] = chain_var * INIT_VARIANCE_MULT
    for t in range(1, T + 1):
        c = obs_var / (fwd[t - 1] + chain_var + obs_var)
        fwd[t] = c * (fwd[t - 1] + chain_var)
    var = np.zeros(T + 1)
    var[T] = fwd[T]
    for t in range(T - 1, -1, -1):
        c = (fwd[t] / (fwd[t] + chain_var)) ** 2 if fwd[t] > 0 else 0.0
        var[t] = c * (var[t + 1] - chain_var) + (1 - c) * fwd[t]
    return fwd, var


def _smooth_means(obs: np.ndarray, fwd_var: np.ndarray, chain_var: float, obs_var: float) -> np.ndarray:
    """Kalman smoother applied row-wise: obs (V, T) -> means (V, T+1)."""
    V, T = obs.shape
    fwd = np.zeros((V, T + 1))
    for t in range(1, T + 1):
        c = obs_var / (fwd_var[t - 1] + chain_var + obs_var)
        fwd[:, t] = c * fwd[:, t - 1] + (1 - c) * obs[:, t - 1]
    mean = np.zeros((V, T + 1))
    mean[:, T] = fwd[:, T]
    for t in range(T - 1, -1, -1):
        c = chain_var / (fwd_var[t] + chain_var)
        mean[:, t] = c * fwd[:, t] + (1 - c) * mean[:, t + 1]
    return mean


def _smoother_matrix(T: int, fwd_var: np.ndarray, chain_var: float, obs_var: float) -> np.ndarray:
    """D[s, t] = d mean_t / d obs_s; the smoother is linear with zero intercept."""
    return _smooth_means(np.eye(T), fwd_var, chain_var, obs_var)


class _TopicChain:
    """One topic's variational state."""

    def __init__(self, obs: np.ndarray, var: np.ndarray, D: np.ndarray, chain_var: float):
        self.obs = obs  # (V, T)
        self.var = var  # (T+1,), shared smoothed variances
        self.D = D      # (T, T+1)
        self.chain_var = chain_var
        self.refresh()

    def refresh(self) -> None:
        self.mean = self.obs @ self.D
        self.zeta = np.exp(self.mean[:, 1:] + self.var[None, 1:] / 2).sum(axis=0)

    def e_log_prob(self) -> np.ndarray:
        """(V, T) expected log word weight: mean - log zeta."""
        return self.mean[:, 1:] - np.log(self.zeta)[None, :]

    def penalty(self) -> float:
        """Random-walk prior terms that depend on the means."""
        diffs = np.diff(self.mean, axis=1)
        return -(
            np.sum(self.mean[:, 0] ** 2) / (2 * INIT_VARIANCE_MULT * self.chain_var)
            + np.sum(diffs**2) / (2 * self.chain_var)
        )

    def _objective(self, x: np.ndarray, sstats: np.ndarray, totals: np.ndarray, zeta: np.ndarray):
        V, T = sstats.shape
        M = x.reshape(V, T) @ self.D
        Mt = M[:, 1:]
        expterm = np.exp(Mt + self.var[None, 1:] / 2)
        ratio = expterm.sum(axis=0) / zeta
        f = float(np.sum(sstats * Mt))
        f -= float(np.sum(totals * (ratio + np.log(zeta) - 1.0)))
        diffs = np.diff(M, axis=1)
        f -= float(
            np.sum(M[:, 0] ** 2) / (2 * INIT_VARIANCE_MULT * self.chain_var)
            + np.sum(diffs**2) / (2 * self.chain_var)
        )
        G = np.zeros_like(M)
        G[:, 1:] = sstats - (totals / zeta)[None, :] * expterm
        G[:, 1:] -= diffs / self.chain_var
        G[:, :-1] += diffs / self.chain_var
        G[:, 0] -= M[:, 0] / (INIT_VARIANCE_MULT * self.chain_var)
        grad = G @ self.D.T
        return -f, -grad.ravel()

    def fit(self, sstats: np.ndarray, rounds: int, maxiter: int) -> None:
        """Coordinate ascent in (obs, zeta) given expected counts.

        Each obs solve is safeguarded: a step that does not improve the
        objective is discarded, so the overall bound cannot go down.
        """
        totals = sstats.sum(axis=0)
        for _ in range(rounds):
            zeta = self.zeta.copy()
            x0 = self.obs.ravel()
            f0, _ = self._objective(x0, sstats, totals, zeta)
            res = optimize.minimize(
                self._objective,
                x0,
                args=(sstats, totals, zeta),
                method="L-BFGS-B",
                jac=True,
                options={"maxiter": maxiter},
            )
            if res.fun < f0:
                self.obs = res.x.reshape(self.obs.shape)
            self.refresh()


@dataclass
class TopicMass:
    """Per-slice topic mass, document-count and token weighted, raw and shares."""

    doc_mass: np.ndarray
    doc_share: np.ndarray
    token_mass: np.ndarray
    token_share: np.ndarray


def _canonical_order(docs: Sequence[Doc]) -> list[int]:
    keys = [(ids.tobytes(), cts.tobytes()) for ids, cts in docs]
    return sorted(range(len(docs)), key=lambda i: keys[i])


class DynamicTopicModel(BaseEstimator):
    """Estimator front end; fitted attributes follow sklearn conventions.

    ``fit`` takes a list with one entry per time slice, each a list of
    (term_ids, counts) documents over a shared vocabulary.
    """

    def __init__(
        self,
        n_topics=2,
        chain_variance=0.005,
        doc_topic_prior=0.01,
        obs_variance=0.5,
        em_max_passes=20,
        elbo_rel_tol=1e-4,
        mstep_rounds=2,
        mstep_maxiter=60,
        doc_max_iters=40,
        doc_tol=1e-10,
        lda_init_passes=10,
        seed=0,
    ):
        self.n_topics = n_topics
        self.chain_variance = chain_variance
        self.doc_topic_prior = doc_topic_prior
        self.obs_variance = obs_variance
        self.em_max_passes = em_max_passes
        self.elbo_rel_tol = elbo_rel_tol
        self.mstep_rounds = mstep_rounds
        self.mstep_maxiter = mstep_maxiter
        self.doc_max_iters = doc_max_iters
        self.doc_tol = doc_tol
        self.lda_init_passes = lda_init_passes
        self.seed = seed

    def _config(self) -> DtmConfig:
        return DtmConfig(
            n_topics=self.n_topics,
            chain_variance=self.chain_variance,
            doc_topic_prior=self.doc_topic_prior,
            obs_variance=self.obs_variance,
            em_max_passes=self.em_max_passes,
            elbo_rel_tol=self.elbo_rel_tol,
            mstep_rounds=self.mstep_rounds,
            mstep_maxiter=self.mstep_maxiter,
            doc_max_iters=self.doc_max_iters,
            doc_tol=self.doc_tol,
            lda_init_passes=self.lda_init_passes,
            seed=self.seed,
        )

    # -- fitting -----------------------------------------------------------

    def fit(
        self,
        docs_by_slice: Sequence[Sequence[Doc]],
        terms: Sequence[str] | None = None,
        n_terms: int | None = None,
    ):
        cfg = self._config()
        cfg.validate()
        T = len(docs_by_slice)
        if T < 1:
            raise ValueError("need at least one time slice")
        for t, docs in enumerate(docs_by_slice):
            if len(docs) == 0:
                raise ValueError(f"time slice {t} is empty")
        seen = 0
        for docs in docs_by_slice:
            for ids, _ in docs:
                if ids.size:
                    seen = max(seen, int(ids.max()) + 1)
        if terms is not None:
            if len(terms) < seen:
                raise ValueError("terms shorter than the highest term id in the corpus")
            n_terms = len(terms)
        elif n_terms is None:
            n_terms = seen
        elif n_terms < seen:
            raise ValueError("n_terms smaller than the highest term id in the corpus")
        if n_terms == 0:
            raise ValueError("corpus has no tokens")
        K, V = cfg.n_topics, n_terms
        alpha = cfg.doc_topic_prior

        # Documents are processed in a canonical order so the fit is invariant
        # to within-slice permutations; gammas map back to input order at the end.
        orders = [_canonical_order(docs) for docs in docs_by_slice]
        slices = [[docs_by_slice[t][i] for i in orders[t]] for t in range(T)]
        pooled = [doc for docs in slices for doc in docs]

        init_lda = VariationalLda(
            n_topics=K,
            alpha=alpha,
            passes=cfg.lda_init_passes,
            seed=cfg.seed,
            doc_max_iters=cfg.doc_max_iters,
        ).fit(pooled, n_terms=V)

        fwd_var, var = _chain_variances(T, cfg.chain_variance, cfg.obs_variance)
        D = _smoother_matrix(T, fwd_var, cfg.chain_variance, cfg.obs_variance)
        chains = []
        for k in range(K):
            counts = init_lda.sstats_[k].copy()
            total = counts.sum()
            p = counts / total if total > 0 else np.full(V, 1.0 / V)
            p = p + 1.0 / V
            p = p / p.sum()
            obs = np.tile(np.log(p)[:, None], (1, T))
            chains.append(_TopicChain(obs, var, D, cfg.chain_variance))

        gammas: list[np.ndarray | None] = [None] * len(pooled)
        doc_slice = np.concatenate([np.full(len(docs), t, dtype=np.int64) for t, docs in enumerate(slices)])
        elbo_trace: list[float] = []

        for _ in range(cfg.em_max_passes):
            log_beta = [
                np.stack([chain.e_log_prob()[:, t] for chain in chains])  # (K, V)
                for t in range(T)
            ]
            sstats = [np.zeros((V, T)) for _ in range(K)]
            bound = 0.0
            for d, (ids, counts) in enumerate(pooled):
                t = doc_slice[d]
                gamma, phi, doc_b = _infer_doc(
                    ids, counts, log_beta[t], alpha, gammas[d],
                    cfg.doc_max_iters, cfg.doc_tol,
                )
                gammas[d] = gamma
                bound += doc_b
                weighted = counts[:, None] * phi  # (n_tokens, K)
                for k in range(K):
                    sstats[k][ids, t] += weighted[:, k]
            bound += sum(chain.penalty() for chain in chains)
            if not np.isfinite(bound):
                raise FloatingPointError(
                    f"ELBO became non-finite at pass {len(elbo_trace)}; "
                    f"chain_variance={cfg.chain_variance}, obs_variance={cfg.obs_variance}"
                )
            elbo_trace.append(float(bound))
            if (
                len(elbo_trace) > 1
                and abs(elbo_trace[-1] - elbo_trace[-2]) <= cfg.elbo_rel_tol * abs(elbo_trace[-2])
            ):
                break
            for k in range(K):
                chains[k].fit(sstats[k], cfg.mstep_rounds, cfg.mstep_maxiter)

        self.config_ = cfg
        self.n_terms_ = V
        self.n_slices_ = T
        self.terms_ = tuple(terms) if terms is not None else None
        self.elbo_trace_ = elbo_trace
        self.beta_mean_ = np.stack(
            [np.stack([chain.mean[:, t + 1] for chain in chains]) for t in range(T)]
        )  # (T, K, V)
        self.beta_variance_ = np.broadcast_to(
            var[1:, None, None], (T, K, V)
        ).copy()
        theta = np.vstack([g / g.sum() for g in gammas])
        doc_topic = np.empty_like(theta)
        offset = 0
        for t in range(T):
            n = len(slices[t])
            block = theta[offset : offset + n]
            inverse = np.empty(n, dtype=np.int64)
            inverse[np.asarray(orders[t])] = np.arange(n)
            doc_topic[offset : offset + n] = block[inverse]
            offset += n
        self.doc_topic_ = doc_topic
        self.doc_counts_ = np.array(
            [float(c.sum()) for docs in docs_by_slice for _, c in docs]
        )
        self.slice_sizes_ = [len(docs) for docs in docs_by_slice]
        return self

    # -- queries -----------------------------------------------------------

    def word_probs(self, t: int, k: int) -> np.ndarray:
        """softmax over the slice-t, topic-k mean parameters; sums to 1."""
        self._check_indices(t, k)
        m = self.beta_mean_[t, k]
        e = np.exp(m - m.max())
        return e / e.sum()

    def _check_indices(self, t: int, k: int) -> None:
        if not 0 <= t < self.n_slices_:
            raise IndexError(f"slice {t} out of range [0, {self.n_slices_})")
        if not 0 <= k < self.config_.n_topics:
            raise IndexError(f"topic {k} out of range [0, {self.config_.n_topics})")

    def _term_name(self, idx: int) -> str:
        return self.terms_[idx] if self.terms_ is not None else str(idx)

    def top_words(self, k: int, t: int, n: int) -> list[tuple[str, float]]:
        """The n most probable terms at (slice t, topic k); ties keep term order."""
        if n > self.n_terms_:
            raise ValueError(f"n={n} exceeds vocabulary size {self.n_terms_}")
        probs = self.word_probs(t, k)
        order = np.argsort(-probs, kind="stable")[:n]
        return [(self._term_name(int(i)), float(probs[i])) for i in order]

    def word_trajectory(self, k: int, term: str | int) -> list[float]:
        """Probability of one term in topic k at every slice."""
        if isinstance(term, str):
            if self.terms_ is None:
                raise ValueError("model was fit without term names")
            try:
                idx = self.terms_.index(term)
            except ValueError:
                raise KeyError(f"unknown term {term!r}") from None
        else:
            idx = int(term)
            if not 0 <= idx < self.n_terms_:
                raise KeyError(f"term index {idx} out of range")
        return [float(self.word_probs(t, k)[idx]) for t in range(self.n_slices_)]

    def slice_topic_mass(self, docs_by_slice: Sequence[Sequence[Doc]] | None = None) -> TopicMass:
        """Aggregate document-topic proportions per slice.

        Emits both weightings (document-count and token) since either reading
        of "topic distribution over time" is defensible; shares are the
        row-normalized masses.
        """
        K = self.config_.n_topics
        T = self.n_slices_
        if docs_by_slice is not None:
            if len(docs_by_slice) != T or [len(d) for d in docs_by_slice] != list(self.slice_sizes_):
                raise ValueError("docs_by_slice does not match the corpus the model was fit on")
        doc_mass = np.zeros((T, K))
        token_mass = np.zeros((T, K))
        offset = 0
        for t, n in enumerate(self.slice_sizes_):
            theta = self.doc_topic_[offset : offset + n]
            weights = self.doc_counts_[offset : offset + n]
            doc_mass[t] = theta.sum(axis=0)
            token_mass[t] = (theta * weights[:, None]).sum(axis=0)
            offset += n
        def _share(m):
            sums = m.sum(axis=1, keepdims=True)
            return np.divide(m, sums, out=np.zeros_like(m), where=sums > 0)
        return TopicMass(doc_mass, _share(doc_mass), token_mass, _share(token_mass))

    def fold_in(self, docs_by_slice: Sequence[Sequence[Doc]]) -> list[np.ndarray]:
        """Infer theta for unseen docs, slice by slice, with topics fixed."""
        if len(docs_by_slice) != self.n_slices_:
            raise ValueError("slice count mismatch")
        out = []
        for t, docs in enumerate(docs_by_slice):
            log_beta = np.stack(
                [np.log(self.word_probs(t, k)) for k in range(self.config_.n_topics)]
            )
            thetas = []
            for ids, counts in docs:
                gamma, _, _ = _infer_doc(
                    ids, counts, log_beta, self.config_.doc_topic_prior, None,
                    self.config_.doc_max_iters, self.config_.doc_tol,
                )
                thetas.append(gamma / gamma.sum())
            out.append(np.vstack(thetas) if thetas else np.zeros((0, self.config_.n_topics)))
        return out

    def per_word_log_likelihood(self, docs_by_slice: Sequence[Sequence[Doc]]) -> float:
        """Mean predictive log p(token) with fold-in document proportions."""
        thetas = self.fold_in(docs_by_slice)
        total_ll = 0.0
        total_tokens = 0.0
        for t, docs in enumerate(docs_by_slice):
            beta = np.stack([self.word_probs(t, k) for k in range(self.config_.n_topics)])
            for (ids, counts), theta in zip(docs, thetas[t]):
                if ids.size == 0:
                    continue
                p = theta @ beta[:, ids]
                total_ll += float(counts @ np.log(p))
                total_tokens += float(counts.sum())
        if total_tokens == 0:
            raise ValueError("no tokens to evaluate")
        return total_ll / total_tokens

    # -- serialization -----------------------------------------------------

    def to_json_dict(self) -> dict:
        return {
            "format_version": 1,
            "config": self.config_.as_dict(),
            "n_terms": self.n_terms_,
            "n_slices": self.n_slices_,
            "terms": list(self.terms_) if self.terms_ is not None else None,
            "elbo_trace": self.elbo_trace_,
            "beta_mean": self.beta_mean_.tolist(),
            "beta_variance": self.beta_variance_.tolist(),
            "doc_topic": self.doc_topic_.tolist(),
        }

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, sort_keys=True, separators=(",", ":"))


def fit_dtm(
    docs_by_slice: Sequence[Sequence[Doc]],
    config: DtmConfig | None = None,
    terms: Sequence[str] | None = None,
) -> DynamicTopicModel:
    config = config or DtmConfig()
    model = DynamicTopicModel(**config.as_dict())
    return model.fit(docs_by_slice, terms=terms)


def top_words(model: DynamicTopicModel, k: int, t: int, n: int) -> list[tuple[str, float]]:
    return model.top_words(k, t, n)


def word_trajectory(model: DynamicTopicModel, k: int, term: str | int) -> list[float]:
    return model.word_trajectory(k, term)


def slice_topic_mass(model: DynamicTopicModel, docs_by_slice=None) -> TopicMass:
    return model.slice_topic_mass(docs_by_slice)
