import numpy as np
import pytest
import scipy.sparse as sp

from infodemic.textfeat import (
    FeatureMatrix,
    TweetVectorizer,
    bigram_terms,
    build_count_matrix,
    build_feature_matrix,
    build_linkage_index,
    build_vocabulary,
    domain_link_features,
    domain_of,
    load_flagged_domains,
    load_stopwords,
    tokenize,
    vectorize,
    write_link_flags_csv,
    write_matrix_triplets_csv,
)
from tests.test_corpus import make_tweet


class TestTokenize:
    def test_urls_stopwords_punct(self):
        tokens = tokenize("Check this https://t.co/x #5G towers!!", {"this"})
        assert tokens == ["check", "#5g", "towers"]

    def test_empty(self):
        assert tokenize("") == []

    def test_numbers_kept(self):
        assert tokenize("Kill 65M people") == ["kill", "65m", "people"]

    def test_mention_prefix_kept(self):
        assert tokenize("thanks @WHO!") == ["thanks", "@who"]

    def test_punctuation_only_tokens_dropped(self):
        assert tokenize("wow !!! ... #") == ["wow"]

    def test_bigrams_join_with_underscore(self):
        assert bigram_terms(["kill", "65m", "people"]) == ["kill_65m", "65m_people"]


class TestVocabulary:
    def test_enumeration_at_zero_threshold(self):
        vocab = build_vocabulary([["kill", "65m"], ["kill", "them"]], min_df_fraction=0.0)
        assert set(vocab.terms) == {"kill", "65m", "them", "kill_65m", "kill_them"}
        assert vocab.n_docs == 2
        assert vocab.df[vocab.index_of("kill")] == 2

    def test_threshold_drops_rare_terms(self):
        docs = [["common"] for _ in range(10_000)]
        for i in range(4):
            docs[i] = ["common", "rare"]
        vocab = build_vocabulary(docs, min_df_fraction=0.0005)
        assert vocab.index_of("rare") is None  # 4/10000 = 0.0004 < 0.0005
        assert vocab.index_of("common") is not None

    def test_threshold_keeps_terms_at_boundary(self):
        docs = [["common"] for _ in range(10_000)]
        for i in range(5):
            docs[i] = ["common", "boundary"]
        vocab = build_vocabulary(docs, min_df_fraction=0.0005)
        assert vocab.index_of("boundary") is not None  # 5/10000 == 0.0005

    def test_bigram_surface_form_is_single_term(self):
        vocab = build_vocabulary([["kill", "65m"]], min_df_fraction=0.0)
        assert "kill_65m" in vocab.terms

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValueError):
            build_vocabulary([], 0.0)

    def test_pruning_monotone(self):
        rng = np.random.default_rng(0)
        words = [f"w{i}" for i in range(30)]
        docs = [list(rng.choice(words, size=6)) for _ in range(200)]
        sizes = []
        for frac in (0.0, 0.01, 0.05, 0.2):
            sizes.append(len(build_vocabulary(docs, frac)))
        assert sizes == sorted(sizes, reverse=True)


class TestVectorize:
    def setup_method(self):
        self.vocab = build_vocabulary([["kill", "65m"], ["kill", "them"]], min_df_fraction=0.0)

    def counts(self, tokens):
        vec = vectorize(tokens, self.vocab)
        return {self.vocab.terms[j]: int(vec[0, j]) for j in vec.indices}

    def test_hand_counted_example(self):
        got = self.counts(["kill", "kill", "65m"])
        assert got == {"kill": 2, "65m": 1, "kill_65m": 1}

    def test_empty_tokens(self):
        assert vectorize([], self.vocab).nnz == 0

    def test_all_oov(self):
        assert vectorize(["zebra", "yak"], self.vocab).nnz == 0

    def test_df_reproduced_by_vectorizing_build_docs(self):
        rng = np.random.default_rng(1)
        words = [f"w{i}" for i in range(12)]
        docs = [list(rng.choice(words, size=5)) for _ in range(80)]
        vocab = build_vocabulary(docs, 0.0)
        matrix = build_count_matrix(docs, vocab)
        presence = (matrix > 0).sum(axis=0).A1
        assert presence.tolist() == list(vocab.df)

    def test_bigram_count_bound(self):
        rng = np.random.default_rng(2)
        words = ["a", "b", "c"]
        docs = [list(rng.choice(words, size=int(rng.integers(0, 7)))) for _ in range(50)]
        vocab = build_vocabulary(docs, 0.0)
        bigram_cols = [i for i, t in enumerate(vocab.terms) if "_" in t]
        matrix = build_count_matrix(docs, vocab)
        for i, doc in enumerate(docs):
            total_bigrams = matrix[i, bigram_cols].sum()
            assert total_bigrams <= max(0, len(doc) - 1)


class TestEstimatorShape:
    def test_fit_transform_and_get_params(self):
        texts = ["kill 65m people", "kill them all", "65m people gone"]
        vec = TweetVectorizer(min_df_fraction=0.0)
        assert vec.get_params()["min_df_fraction"] == 0.0
        X = vec.fit(texts).transform(texts)
        assert sp.issparse(X)
        assert X.shape == (3, len(vec.vocabulary_))
        from sklearn.base import clone

        clone(vec)  # estimator contract: params round-trip


class TestDomainLinks:
    def setup_method(self):
        self.flagged = frozenset({"fakenews.example"})
        self.origin = make_tweet(
            "origin",
            text="look",
            linked_urls=("https://www.fakenews.example/a",),
            source_domain="fakenews.example",
        )
        self.rt = make_tweet("rt", text="RT @x: look", retweet_of_id="origin")
        self.reply_to_rt = make_tweet("deep", text="surely not", reply_to_id="rt")
        self.index = build_linkage_index([self.origin, self.rt, self.reply_to_rt])

    def test_domain_of(self):
        assert domain_of("https://www.Example.COM:443/x?y=1") == "example.com"
        assert domain_of("not a url") is None

    def test_originates(self):
        assert domain_link_features(self.origin, self.flagged, self.index) == (True, False, False, False)

    def test_reply_to_origin(self):
        reply = make_tweet("r", text="no way", reply_to_id="origin")
        assert domain_link_features(reply, self.flagged, self.index) == (False, True, False, False)

    def test_retweet_of_origin(self):
        assert domain_link_features(self.rt, self.flagged, self.index) == (False, False, True, False)

    def test_reply_to_retweet_is_otherwise_linked(self):
        assert domain_link_features(self.reply_to_rt, self.flagged, self.index) == (
            False,
            False,
            False,
            True,
        )

    def test_unresolvable_targets_are_false(self):
        dangling = make_tweet("d", text="hm", reply_to_id="missing")
        assert domain_link_features(dangling, self.flagged, self.index) == (
            False,
            False,
            False,
            False,
        )

    def test_depth_cap(self):
        # Chain of 4 hops: reply -> reply -> reply -> origin is beyond depth 3.
        t3 = make_tweet("t3", text="x", reply_to_id="origin")
        t2 = make_tweet("t2", text="x", reply_to_id="t3")
        t1 = make_tweet("t1", text="x", reply_to_id="t2")
        t0 = make_tweet("t0", text="x", reply_to_id="t1")
        index = build_linkage_index([self.origin, t3, t2, t1, t0])
        assert domain_link_features(t1, self.flagged, index)[3] is True
        assert domain_link_features(t0, self.flagged, index)[3] is False

    def test_subdomain_suffix_match(self):
        tweet = make_tweet("s", text="x", linked_urls=("https://cdn.fakenews.example/z",))
        assert domain_link_features(tweet, self.flagged, {})[0] is True


class TestFiles:
    def test_flagged_domain_csv(self, tmp_path):
        path = tmp_path / "domains.csv"
        path.write_text(
            "domain,flag\nfakenews.example,not_credible\ngood.example,credible\n",
            encoding="utf-8",
        )
        assert load_flagged_domains(path) == frozenset({"fakenews.example"})

    def test_flagged_domain_csv_rejects_unknown_flag(self, tmp_path):
        path = tmp_path / "domains.csv"
        path.write_text("domain,flag\nx.example,dubious\n", encoding="utf-8")
        with pytest.raises(ValueError):
            load_flagged_domains(path)

    def test_stopword_file(self, tmp_path):
        path = tmp_path / "stop.txt"
        path.write_text("the\n\nand\n", encoding="utf-8")
        assert load_stopwords(path) == frozenset({"the", "and"})

    def test_matrix_exports(self, tmp_path):
        tweets = [make_tweet("1", text="kill 65m"), make_tweet("2", text="kill them")]
        vocab = build_vocabulary([tokenize(t.text) for t in tweets], 0.0)
        matrix = build_feature_matrix(tweets, vocab, frozenset(), frozenset(), {})
        write_matrix_triplets_csv(matrix, tmp_path / "triplets.csv")
        write_link_flags_csv(matrix, tmp_path / "flags.csv")
        triplets = (tmp_path / "triplets.csv").read_text(encoding="utf-8").splitlines()
        assert triplets[0] == "doc_id,term,count"
        assert len(triplets) == 1 + matrix.counts.nnz
        flags = (tmp_path / "flags.csv").read_text(encoding="utf-8").splitlines()
        assert flags[0] == "doc_id,originates,replies_to_origin,retweets_origin,otherwise_linked"

    def test_design_matrix_appends_flags_after_terms(self):
        tweets = [
            make_tweet("1", text="kill 65m", source_domain="bad.example"),
            make_tweet("2", text="kill them"),
        ]
        vocab = build_vocabulary([tokenize(t.text) for t in tweets], 0.0)
        matrix = build_feature_matrix(
            tweets, vocab, frozenset(), frozenset({"bad.example"}), build_linkage_index(tweets)
        )
        design = matrix.design_matrix()
        assert design.shape == (2, len(vocab) + 4)
        assert design[0, len(vocab)] == 1  # originates column
        assert design[1, len(vocab)] == 0
