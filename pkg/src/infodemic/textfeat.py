"""Tokenization, sparse unigram+bigram document-term matrices, and domain-linkage features."""

from __future__ import annotations

import csv
import hashlib
import string
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence
from urllib.parse import urlparse

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, TransformerMixin

from .corpus import Tweet, normalize_tweet

_PUNCT = string.punctuation

LINK_FLAG_NAMES = ("originates", "replies_to_origin", "retweets_origin", "otherwise_linked")


def load_stopwords(path: str | Path) -> frozenset[str]:
    """One token per line; blank lines ignored."""
    with open(path, "r", encoding="utf-8") as fh:
        return frozenset(line.strip() for line in fh if line.strip())


def _strip_token(token: str) -> str:
    # Strip edge punctuation but keep "#" / "@" prefixes ("#5g", "@who").
    token = token.rstrip(_PUNCT)
    if token[:1] in ("#", "@"):
        return token[0] + token[1:].strip(_PUNCT)
    return token.lstrip(_PUNCT)


def tokenize(text: str, stopwords: frozenset[str] | set[str] = frozenset()) -> list[str]:
    """Normalize, split on whitespace, strip edge punctuation, drop stopwords/empties."""
    tokens = []
    for raw in normalize_tweet(text).split():
        tok = _strip_token(raw)
        if not tok or not any(c.isalnum() for c in tok):
            continue
        if tok in stopwords:
            continue
        tokens.append(tok)
    return tokens


def bigram_terms(tokens: Sequence[str]) -> list[str]:
    return [f"{a}_{b}" for a, b in zip(tokens, tokens[1:])]


@dataclass(frozen=True)
class Vocabulary:
    """Frozen, index-stable term list (unigrams plus underscore-joined bigrams)."""

    terms: tuple[str, ...]
    df: tuple[int, ...]
    n_docs: int

    def __post_init__(self):
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.terms)})

    def __len__(self) -> int:
        return len(self.terms)

    def index_of(self, term: str) -> int | None:
        return self._index.get(term)

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for term in self.terms:
            h.update(term.encode("utf-8"))
            h.update(b"\x00")
        return h.hexdigest()


def build_vocabulary(
    token_docs: Sequence[Sequence[str]],
    min_df_fraction: float = 0.0005,
    bigrams: bool = True,
) -> Vocabulary:
    """Count document frequencies and retain terms with df/n_docs >= min_df_fraction."""
    if not 0 <= min_df_fraction < 1:
        raise ValueError("min_df_fraction must be in [0, 1)")
    n_docs = len(token_docs)
    if n_docs == 0:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    df: dict[str, int] = {}
    for tokens in token_docs:
        seen = set(tokens)
        if bigrams:
            seen.update(bigram_terms(list(tokens)))
        for term in seen:
            df[term] = df.get(term, 0) + 1
    kept = sorted(t for t, c in df.items() if c / n_docs >= min_df_fraction)
    return Vocabulary(terms=tuple(kept), df=tuple(df[t] for t in kept), n_docs=n_docs)


def _term_counts(tokens: Sequence[str], vocab: Vocabulary, bigrams: bool = True) -> dict[int, int]:
    counts: dict[int, int] = {}
    candidates = list(tokens)
    if bigrams:
        candidates += bigram_terms(list(tokens))
    for term in candidates:
        idx = vocab.index_of(term)
        if idx is not None:
            counts[idx] = counts.get(idx, 0) + 1
    return counts


def vectorize(tokens: Sequence[str], vocab: Vocabulary, bigrams: bool = True) -> sp.csr_matrix:
    """Sparse 1 x |vocab| count vector; out-of-vocabulary terms contribute nothing."""
    counts = _term_counts(tokens, vocab, bigrams)
    if not counts:
        return sp.csr_matrix((1, len(vocab)), dtype=np.int64)
    cols = np.fromiter(sorted(counts), dtype=np.int64)
    data = np.array([counts[c] for c in cols], dtype=np.int64)
    rows = np.zeros_like(cols)
    return sp.csr_matrix((data, (rows, cols)), shape=(1, len(vocab)))


def build_count_matrix(
    token_docs: Sequence[Sequence[str]], vocab: Vocabulary, bigrams: bool = True
) -> sp.csr_matrix:
    data, indices, indptr = [], [], [0]
    for tokens in token_docs:
        counts = _term_counts(tokens, vocab, bigrams)
        for col in sorted(counts):
            indices.append(col)
            data.append(counts[col])
        indptr.append(len(indices))
    return sp.csr_matrix(
        (np.array(data, dtype=np.int64), np.array(indices, dtype=np.int64), np.array(indptr)),
        shape=(len(token_docs), len(vocab)),
    )


class TweetVectorizer(BaseEstimator, TransformerMixin):
    """Count vectorizer over tweet text: unigrams plus adjacent bigrams, df-pruned."""

    def __init__(self, min_df_fraction=0.0005, bigrams=True, stopwords=frozenset()):
        self.min_df_fraction = min_df_fraction
        self.bigrams = bigrams
        self.stopwords = stopwords

    def fit(self, texts, y=None):
        token_docs = [tokenize(t, self.stopwords) for t in texts]
        self.vocabulary_ = build_vocabulary(token_docs, self.min_df_fraction, self.bigrams)
        return self

    def transform(self, texts):
        token_docs = [tokenize(t, self.stopwords) for t in texts]
        return build_count_matrix(token_docs, self.vocabulary_, self.bigrams)


def domain_of(url: str) -> str | None:
    """Lowercased host with any leading "www." and port stripped."""
    try:
        host = urlparse(url).netloc
    except ValueError:
        return None
    host = host.lower().split(":")[0]
    if host.startswith("www."):
        host = host[4:]
    return host or None


def _domain_flagged(domain: str | None, flagged: frozenset[str] | set[str]) -> bool:
    if not domain:
        return False
    if domain in flagged:
        return True
    return any(domain.endswith("." + f) for f in flagged)


def _originates(tweet: Tweet, flagged) -> bool:
    if _domain_flagged(tweet.source_domain, flagged):
        return True
    return any(_domain_flagged(domain_of(u), flagged) for u in tweet.linked_urls)


def domain_link_features(
    tweet: Tweet,
    flagged_domains: frozenset[str] | set[str],
    linkage_index: Mapping[str, Tweet],
    max_hops: int = 3,
) -> tuple[bool, bool, bool, bool]:
    """Four Booleans describing the tweet's relationship to flagged domains.

    originates: the tweet itself links a flagged domain.
    replies_to_origin / retweets_origin: its direct target originates.
    otherwise_linked: a reply/retweet chain of up to ``max_hops`` reaches an
    originating tweet and no direct flag fired. Unresolvable targets are False.
    """
    originates = _originates(tweet, flagged_domains)

    parent_reply = linkage_index.get(tweet.reply_to_id) if tweet.reply_to_id else None
    parent_rt = linkage_index.get(tweet.retweet_of_id) if tweet.retweet_of_id else None
    replies_to_origin = parent_reply is not None and _originates(parent_reply, flagged_domains)
    retweets_origin = parent_rt is not None and _originates(parent_rt, flagged_domains)

    otherwise = False
    if not (originates or replies_to_origin or retweets_origin):
        frontier = [t for t in (parent_reply, parent_rt) if t is not None]
        visited = {tweet.id} | {t.id for t in frontier}
        depth = 1
        while frontier and depth < max_hops and not otherwise:
            depth += 1
            nxt = []
            for node in frontier:
                for target_id in (node.reply_to_id, node.retweet_of_id):
                    if not target_id or target_id in visited:
                        continue
                    target = linkage_index.get(target_id)
                    if target is None:
                        continue
                    visited.add(target.id)
                    if _originates(target, flagged_domains):
                        otherwise = True
                        break
                    nxt.append(target)
                if otherwise:
                    break
            frontier = nxt
    return (originates, replies_to_origin, retweets_origin, otherwise)


def build_linkage_index(tweets: Iterable[Tweet]) -> dict[str, Tweet]:
    return {t.id: t for t in tweets}


def build_link_flag_matrix(
    tweets: Sequence[Tweet],
    flagged_domains: frozenset[str] | set[str],
    linkage_index: Mapping[str, Tweet],
) -> np.ndarray:
    flags = np.zeros((len(tweets), 4), dtype=bool)
    for i, tweet in enumerate(tweets):
        flags[i] = domain_link_features(tweet, flagged_domains, linkage_index)
    return flags


def load_flagged_domains(path: str | Path) -> frozenset[str]:
    """CSV with header ``domain,flag``; rows flagged ``not_credible`` are returned."""
    flagged = set()
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "domain" not in reader.fieldnames or "flag" not in reader.fieldnames:
            raise ValueError(f"{path}: expected header domain,flag")
        for row in reader:
            flag = (row["flag"] or "").strip()
            if flag not in ("not_credible", "credible"):
                raise ValueError(f"{path}: unknown flag {flag!r} for {row['domain']!r}")
            if flag == "not_credible":
                flagged.add(row["domain"].strip().lower())
    return frozenset(flagged)


@dataclass
class FeatureMatrix:
    """Sparse doc-term counts plus the four domain-linkage Boolean columns."""

    doc_ids: tuple[str, ...]
    vocab: Vocabulary
    counts: sp.csr_matrix
    link_flags: np.ndarray

    def __post_init__(self):
        if self.counts.shape != (len(self.doc_ids), len(self.vocab)):
            raise ValueError("counts shape does not match doc_ids x vocab")
        if self.link_flags.shape != (len(self.doc_ids), 4):
            raise ValueError("link_flags must be n_docs x 4")

    @property
    def n_features(self) -> int:
        return len(self.vocab) + 4

    def design_matrix(self) -> sp.csr_matrix:
        """Term-count columns with the four link flags appended as 0/1 columns."""
        flags = sp.csr_matrix(self.link_flags.astype(np.int64))
        return sp.hstack([self.counts, flags], format="csr")

    def row_for(self, doc_id: str) -> int:
        try:
            return self.doc_ids.index(doc_id)
        except ValueError:
            raise KeyError(doc_id) from None


def build_feature_matrix(
    tweets: Sequence[Tweet],
    vocab: Vocabulary,
    stopwords: frozenset[str] | set[str],
    flagged_domains: frozenset[str] | set[str],
    linkage_index: Mapping[str, Tweet],
) -> FeatureMatrix:
    token_docs = [tokenize(t.text, stopwords) for t in tweets]
    return FeatureMatrix(
        doc_ids=tuple(t.id for t in tweets),
        vocab=vocab,
        counts=build_count_matrix(token_docs, vocab),
        link_flags=build_link_flag_matrix(tweets, flagged_domains, linkage_index),
    )


def write_matrix_triplets_csv(matrix: FeatureMatrix, path: str | Path) -> None:
    coo = matrix.counts.tocoo()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["doc_id", "term", "count"])
        order = np.lexsort((coo.col, coo.row))
        for k in order:
            writer.writerow(
                [matrix.doc_ids[coo.row[k]], matrix.vocab.terms[coo.col[k]], int(coo.data[k])]
            )


def write_link_flags_csv(matrix: FeatureMatrix, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["doc_id", *LINK_FLAG_NAMES])
        for doc_id, row in zip(matrix.doc_ids, matrix.link_flags):
            writer.writerow([doc_id, *(int(v) for v in row)])
