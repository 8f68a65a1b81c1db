import numpy as np
import pytest

from infodemic.lda import VariationalLda, make_doc


def planted_corpus(n_docs=150, v=40, seed=0, doc_len=30, mix=False):
    """Two disjoint-support topics; docs drawn from one topic (or a mixture)."""
    rng = np.random.default_rng(seed)
    beta = np.zeros((2, v))
    beta[0, : v // 2] = 2.0 / v
    beta[1, v // 2 :] = 2.0 / v
    docs, thetas = [], []
    for _ in range(n_docs):
        theta = rng.dirichlet([0.3, 0.3]) if mix else np.eye(2)[rng.integers(0, 2)]
        z = rng.random(doc_len) < theta[1]
        words = np.where(
            z, rng.integers(v // 2, v, size=doc_len), rng.integers(0, v // 2, size=doc_len)
        )
        counts = np.bincount(words, minlength=v)
        ids = np.nonzero(counts)[0]
        docs.append(make_doc(ids, counts[ids]))
        thetas.append(theta)
    return docs, np.array(thetas)


class TestVariationalLda:
    def test_elbo_increases(self):
        docs, _ = planted_corpus(seed=1)
        lda = VariationalLda(n_topics=2, alpha=0.1, passes=15, tol=1e-9, seed=0).fit(docs, n_terms=40)
        diffs = np.diff(lda.elbo_trace_)
        assert np.all(diffs > -1e-6)

    def test_recovers_disjoint_topics(self):
        docs, thetas = planted_corpus(seed=2)
        lda = VariationalLda(n_topics=2, alpha=0.1, passes=20, seed=0).fit(docs, n_terms=40)
        mass_low = lda.topic_word_[:, :20].sum(axis=1)
        # one topic concentrates on the low half, the other on the high half
        assert {round(float(m)) for m in mass_low} == {0, 1}
        # document assignments track the planted topics modulo label switch
        hard = lda.doc_topic_.argmax(axis=1)
        truth = thetas.argmax(axis=1)
        agreement = max((hard == truth).mean(), (hard != truth).mean())
        assert agreement > 0.95

    def test_deterministic_given_seed(self):
        docs, _ = planted_corpus(seed=3)
        a = VariationalLda(n_topics=2, seed=7).fit(docs, n_terms=40)
        b = VariationalLda(n_topics=2, seed=7).fit(docs, n_terms=40)
        assert np.array_equal(a.topic_word_, b.topic_word_)
        assert a.elbo_trace_ == b.elbo_trace_

    def test_doc_topic_rows_on_simplex(self):
        docs, _ = planted_corpus(seed=4, mix=True)
        lda = VariationalLda(n_topics=2, seed=0).fit(docs, n_terms=40)
        assert np.allclose(lda.doc_topic_.sum(axis=1), 1.0, atol=1e-8)
        assert (lda.doc_topic_ >= 0).all()

    def test_per_word_ll_beats_uniform(self):
        docs, _ = planted_corpus(seed=5)
        lda = VariationalLda(n_topics=2, seed=0).fit(docs, n_terms=40)
        ll = lda.per_word_log_likelihood(docs, thetas=lda.doc_topic_)
        assert ll > np.log(1.0 / 40)

    def test_fold_in_close_to_training_theta(self):
        docs, _ = planted_corpus(seed=6)
        lda = VariationalLda(n_topics=2, seed=0).fit(docs, n_terms=40)
        folded = lda.fold_in(docs[:20])
        assert np.abs(folded - lda.doc_topic_[:20]).max() < 0.05

    def test_rejects_empty_corpus(self):
        with pytest.raises(ValueError):
            VariationalLda(n_topics=2).fit([])

    def test_make_doc_validates(self):
        with pytest.raises(ValueError):
            make_doc([1, 1], [2, 3])
