"""Pool-based active learning around the forest: entropy querying, similarity
label propagation, per-cycle retraining, interrater agreement, and the
uncertain-label resolution pass."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .forest import (
    ForestHyperparams,
    ForestModel,
    Metrics,
    evaluate,
    train_forest,
)
from .textfeat import FeatureMatrix


class Label(str, Enum):
    MISINFO = "misinfo"
    NOT_MISINFO = "not_misinfo"
    UNCERTAIN = "uncertain"

    def as_int(self) -> int:
        if self is Label.MISINFO:
            return 1
        if self is Label.NOT_MISINFO:
            return 0
        raise ValueError("uncertain labels have no training value")


@dataclass(frozen=True)
class Provenance:
    kind: str  # "human" | "propagated" | "resolved"
    annotator_id: str | None = None
    from_id: str | None = None
    similarity: float | None = None

    @classmethod
    def human(cls, annotator_id: str) -> "Provenance":
        return cls(kind="human", annotator_id=annotator_id)

    @classmethod
    def propagated(cls, from_id: str, similarity: float) -> "Provenance":
        return cls(kind="propagated", from_id=from_id, similarity=similarity)

    @classmethod
    def resolved(cls) -> "Provenance":
        return cls(kind="resolved")

    def as_dict(self) -> dict:
        d: dict = {"kind": self.kind}
        if self.annotator_id is not None:
            d["annotator_id"] = self.annotator_id
        if self.from_id is not None:
            d["from_id"] = self.from_id
        if self.similarity is not None:
            d["similarity"] = self.similarity
        return d


@dataclass(frozen=True)
class LabeledExample:
    tweet_id: str
    label: Label
    source: Provenance
    round: int = 0

    def __post_init__(self):
        if self.source.kind == "propagated" and self.source.similarity is None:
            raise ValueError("propagated labels must carry their similarity")


@dataclass(frozen=True)
class AgreementReport:
    n_overlap: int
    agreement: float
    kappa: float


def binary_entropy(p: float) -> float:
    """Shannon entropy of a Bernoulli(p), in bits, with 0 log 0 = 0."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability outside [0, 1]: {p}")
    if p in (0.0, 1.0):
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


def rank_by_uncertainty(probas: Mapping[str, float], k: int) -> list[str]:
    """The k items with highest posterior entropy.

    Ordering by |p - 0.5| ascending is equivalent for every entropy base;
    ties break lexicographically by id.
    """
    if k > len(probas):
        raise ValueError(f"pool too small: need {k}, have {len(probas)}")
    ranked = sorted(probas, key=lambda i: (abs(probas[i] - 0.5), i))
    return ranked[:k]


def levenshtein(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a):
        current = [i + 1]
        for j, cb in enumerate(b):
            current.append(
                min(previous[j + 1] + 1, current[j] + 1, previous[j] + (ca != cb))
            )
        previous = current
    return previous[-1]


def string_similarity(a: str, b: str) -> float:
    """1 - levenshtein/max-length over normalized texts; empty vs empty is 1.0."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(a, b) / longest


def _similarity_candidates(text: str, pool_texts: Mapping[str, str], threshold: float) -> Iterable[str]:
    # Length prefilter: sim >= threshold forces |len(a)-len(b)| <= (1-threshold)*max.
    n = len(text)
    slack = 1.0 - threshold
    for tweet_id, other in pool_texts.items():
        m = len(other)
        if abs(n - m) <= slack * max(n, m):
            yield tweet_id


def propagate_labels(
    example: LabeledExample,
    pool_texts: Mapping[str, str],
    labeled_text: str,
    sim_threshold: float = 0.95,
) -> list[LabeledExample]:
    """Copy a human label onto every pool tweet within the similarity threshold.

    One-directional: only human labels propagate, never propagated ones.
    """
    if example.source.kind != "human":
        raise ValueError("only human labels propagate")
    out = []
    for tweet_id in _similarity_candidates(labeled_text, pool_texts, sim_threshold):
        sim = string_similarity(labeled_text, pool_texts[tweet_id])
        if sim >= sim_threshold:
            out.append(
                LabeledExample(
                    tweet_id=tweet_id,
                    label=example.label,
                    source=Provenance.propagated(from_id=example.tweet_id, similarity=sim),
                    round=example.round,
                )
            )
    out.sort(key=lambda e: e.tweet_id)
    return out


def cohen_kappa(labels_a: Sequence, labels_b: Sequence) -> AgreementReport:
    """Chance-corrected agreement between two aligned labelings."""
    a = np.asarray(labels_a)
    b = np.asarray(labels_b)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("labelings must be aligned 1-d sequences")
    n = a.size
    if n < 1:
        raise ValueError("empty labelings")
    po = float((a == b).mean())
    cats, a_idx = np.unique(a, return_inverse=True)
    cats_b, b_idx = np.unique(b, return_inverse=True)
    all_cats = np.unique(np.concatenate([cats, cats_b]))
    pa = np.zeros(all_cats.size)
    pb = np.zeros(all_cats.size)
    pos_a = np.searchsorted(all_cats, cats)
    pos_b = np.searchsorted(all_cats, cats_b)
    pa[pos_a] = np.bincount(a_idx, minlength=cats.size) / n
    pb[pos_b] = np.bincount(b_idx, minlength=cats_b.size) / n
    pe = float(pa @ pb)
    if pe == 1.0:
        if po == 1.0:
            return AgreementReport(n_overlap=n, agreement=po, kappa=1.0)
        raise ValueError("kappa undefined: expected agreement is 1 but observed is not")
    kappa = (po - pe) / (1.0 - pe)
    return AgreementReport(n_overlap=n, agreement=po, kappa=kappa)


def resolve_uncertain(
    uncertain: Sequence[LabeledExample],
    co_rater_labels: Mapping[str, Sequence[Label]],
) -> tuple[list[LabeledExample], list[LabeledExample]]:
    """Second pass over uncertain labels: relabel where co-raters agree.

    Returns (resolved, still_uncertain). An example resolves only when it has
    at least one definite co-rater label and all definite co-labels agree.
    """
    resolved, remaining = [], []
    for ex in uncertain:
        if ex.label is not Label.UNCERTAIN:
            raise ValueError(f"{ex.tweet_id} is not uncertain")
        definite = [l for l in co_rater_labels.get(ex.tweet_id, ()) if l is not Label.UNCERTAIN]
        if definite and all(l == definite[0] for l in definite):
            resolved.append(
                LabeledExample(
                    tweet_id=ex.tweet_id,
                    label=definite[0],
                    source=Provenance.resolved(),
                    round=ex.round,
                )
            )
        else:
            remaining.append(ex)
    return resolved, remaining


@dataclass(frozen=True)
class ActiveConfig:
    k_per_cycle: int = 3
    n_cycles: int = 9
    sim_threshold: float = 0.95
    train_fraction: float = 2 / 3
    hyperparams: ForestHyperparams = field(default_factory=ForestHyperparams)
    seed: int = 0


@dataclass(frozen=True)
class LabelRequest:
    cycle: int
    tweet_id: str
    text: str
    proba: float


@dataclass(frozen=True)
class LabelResponse:
    tweet_id: str
    label: Label
    annotator_id: str


@dataclass(frozen=True)
class BatchItem:
    tweet_id: str
    text: str
    proba: float
    entropy: float


@dataclass(frozen=True)
class BatchView:
    cycle: int
    revision: int
    items: tuple[BatchItem, ...]


@dataclass(frozen=True)
class SubmitResult:
    accepted: int
    rejected: tuple[tuple[str, str], ...]  # (tweet_id, reason)
    propagated_count: int
    cycle: int
    revision: int
    metrics: Metrics


class RevisionConflictError(Exception):
    """Submission carried a stale session revision."""


class SessionCompleteError(Exception):
    """All configured active-learning cycles have run."""


class OracleAborted(Exception):
    """The label provider gave up; the session is left untouched."""


def _utc_now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


class ActiveSession:
    """Single-writer active-learning session over a fixed feature universe.

    The session owns: the accumulated labeled set, the unlabeled pool, the
    fixed held-out test split carved from the seed labels, the current model,
    and an append-only audit log (the durable form of the session).
    """

    def __init__(
        self,
        matrix: FeatureMatrix,
        texts: Mapping[str, str],
        seed_labels: Mapping[str, Label],
        config: ActiveConfig | None = None,
        audit_path: str | Path | None = None,
        clock: Callable[[], str] = _utc_now,
        test_labels: Mapping[str, Label] | None = None,
    ):
        from .forest import stratified_split  # local to avoid cycle noise

        self.config = config or ActiveConfig()
        self.matrix = matrix
        self.texts = dict(texts)
        self.clock = clock
        self.audit_path = Path(audit_path) if audit_path else None
        self.audit_events: list[dict] = []

        ids = set(matrix.doc_ids)
        missing = [i for i in seed_labels if i not in ids]
        if missing:
            raise ValueError(f"seed labels reference unknown tweet ids: {missing[:5]}")
        definite = {i: l for i, l in seed_labels.items() if l is not Label.UNCERTAIN}
        if test_labels is None:
            # Carve the held-out test split out of the seed labels.
            train_ids, test_ids = stratified_split(
                sorted(definite),
                {i: definite[i].as_int() for i in definite},
                train_fraction=self.config.train_fraction,
                balance_train=False,
                seed=self.config.seed,
            )
            test_y = {i: definite[i] for i in test_ids}
        else:
            overlap = set(test_labels) & set(seed_labels)
            if overlap:
                raise ValueError(f"test labels overlap seed labels: {sorted(overlap)[:5]}")
            if set(test_labels) - ids:
                raise ValueError("test labels reference unknown tweet ids")
            train_ids = sorted(definite)
            test_ids = sorted(i for i in test_labels if test_labels[i] is not Label.UNCERTAIN)
            test_y = {i: test_labels[i] for i in test_ids}
        self._design = matrix.design_matrix().tocsr()
        self._row = {d: i for i, d in enumerate(matrix.doc_ids)}

        self.labeled: dict[str, LabeledExample] = {
            i: LabeledExample(i, definite[i], Provenance.human("seed"), round=0)
            for i in train_ids
        }
        self.test_ids = list(test_ids)
        self.test_y = np.array([test_y[i].as_int() for i in test_ids], dtype=np.int64)
        reserved = set(seed_labels) | set(test_ids)
        self.pool: set[str] = {i for i in matrix.doc_ids if i not in reserved}
        self.cycle = 0
        self.revision = 0
        self.metrics_history: list[Metrics] = []
        self._batch_cache: BatchView | None = None
        self.model: ForestModel | None = None
        self._retrain(initial=True)

    # -- internals ---------------------------------------------------------

    def _rows_for(self, ids: Sequence[str]):
        return self._design[[self._row[i] for i in ids]]

    def _training_ids(self) -> list[str]:
        return sorted(i for i, ex in self.labeled.items() if ex.label is not Label.UNCERTAIN)

    def _retrain(self, initial: bool = False) -> None:
        """Rebalance the accumulated labeled set to 50/50 and refit the forest."""
        ids = self._training_ids()
        y = {i: self.labeled[i].label.as_int() for i in ids}
        pos = sorted(i for i in ids if y[i] == 1)
        neg = sorted(i for i in ids if y[i] == 0)
        if not pos or not neg:
            raise ValueError("training set must contain both classes")
        keep = min(len(pos), len(neg))
        # Seed the downsample from the training-set contents: identical data
        # must give an identical model, whatever cycle we are on.
        digest = hashlib.sha256("|".join(ids).encode("utf-8")).digest()[:8]
        rng = np.random.default_rng((self.config.seed, int.from_bytes(digest, "big")))
        balanced = sorted(
            [pos[k] for k in rng.permutation(len(pos))[:keep]]
            + [neg[k] for k in rng.permutation(len(neg))[:keep]]
        )
        hp = self.config.hyperparams
        from .forest import ForestClassifier

        clf = ForestClassifier(**hp.as_dict())
        clf.fit(
            self._rows_for(balanced),
            np.array([y[i] for i in balanced], dtype=np.int64),
            doc_ids=balanced,
            vocab_hash=self.matrix.vocab.content_hash(),
        )
        self.model = clf.model_
        metrics = evaluate(self.model, self._rows_for(self.test_ids), self.test_y)
        self.metrics_history.append(metrics)
        self._batch_cache = None
        self._audit(
            {
                "event": "retrain",
                "cycle": self.cycle,
                "n_training": len(balanced),
                "metrics": metrics.as_dict(),
            },
            initial=initial,
        )

    def _audit(self, event: dict, initial: bool = False) -> None:
        event = dict(event)
        event["ts"] = self.clock()
        self.audit_events.append(event)
        if self.audit_path is not None:
            mode = "w" if initial and len(self.audit_events) == 1 else "a"
            with open(self.audit_path, mode, encoding="utf-8") as fh:
                fh.write(json.dumps(event, sort_keys=True) + "\n")

    def pool_probabilities(self) -> dict[str, float]:
        ids = sorted(self.pool)
        if not ids:
            return {}
        probas = self.model.predict_proba(self._rows_for(ids))
        return dict(zip(ids, probas.tolist()))

    # -- public surface ----------------------------------------------------

    @property
    def complete(self) -> bool:
        return self.cycle >= self.config.n_cycles

    def select_uncertain(self, k: int | None = None) -> list[str]:
        k = self.config.k_per_cycle if k is None else k
        return rank_by_uncertainty(self.pool_probabilities(), k)

    def current_batch(self) -> BatchView:
        if self.complete:
            raise SessionCompleteError(f"all {self.config.n_cycles} cycles are done")
        if self._batch_cache is None:
            probas = self.pool_probabilities()
            chosen = rank_by_uncertainty(probas, min(self.config.k_per_cycle, len(probas)))
            items = tuple(
                BatchItem(
                    tweet_id=i,
                    text=self.texts.get(i, ""),
                    proba=probas[i],
                    entropy=binary_entropy(probas[i]),
                )
                for i in chosen
            )
            self._batch_cache = BatchView(cycle=self.cycle, revision=self.revision, items=items)
        return self._batch_cache

    def submit(
        self,
        responses: Sequence[LabelResponse],
        expected_revision: int | None = None,
    ) -> SubmitResult:
        """Apply one cycle's labels: record, propagate, retrain, advance.

        Entries naming ids outside the served batch are rejected individually;
        accepted entries are applied together. Zero accepted entries leave the
        session untouched (same revision).
        """
        if self.complete:
            raise SessionCompleteError(f"all {self.config.n_cycles} cycles are done")
        if expected_revision is not None and expected_revision != self.revision:
            raise RevisionConflictError(
                f"submission is for revision {expected_revision}, session is at {self.revision}"
            )
        batch_ids = {item.tweet_id for item in self.current_batch().items}
        accepted: list[LabelResponse] = []
        rejected: list[tuple[str, str]] = []
        seen: set[str] = set()
        for resp in responses:
            if resp.tweet_id not in batch_ids:
                rejected.append((resp.tweet_id, "not_in_batch"))
            elif resp.tweet_id in seen:
                rejected.append((resp.tweet_id, "duplicate_entry"))
            else:
                seen.add(resp.tweet_id)
                accepted.append(resp)
        if not accepted:
            return SubmitResult(
                accepted=0,
                rejected=tuple(rejected),
                propagated_count=0,
                cycle=self.cycle,
                revision=self.revision,
                metrics=self.metrics_history[-1],
            )

        round_no = self.cycle + 1
        human_examples = []
        for resp in accepted:
            ex = LabeledExample(
                tweet_id=resp.tweet_id,
                label=resp.label,
                source=Provenance.human(resp.annotator_id),
                round=round_no,
            )
            human_examples.append(ex)
            self.pool.discard(ex.tweet_id)
            self.labeled[ex.tweet_id] = ex
            self._audit(
                {
                    "event": "label",
                    "cycle": self.cycle,
                    "tweet_id": ex.tweet_id,
                    "label": ex.label.value,
                    "source": ex.source.as_dict(),
                    "round": ex.round,
                }
            )

        propagated_count = 0
        for ex in human_examples:
            if ex.label is Label.UNCERTAIN:
                continue
            pool_texts = {i: self.texts.get(i, "") for i in self.pool}
            for prop in propagate_labels(
                ex, pool_texts, self.texts.get(ex.tweet_id, ""), self.config.sim_threshold
            ):
                self.pool.discard(prop.tweet_id)
                self.labeled[prop.tweet_id] = prop
                propagated_count += 1
                self._audit(
                    {
                        "event": "label",
                        "cycle": self.cycle,
                        "tweet_id": prop.tweet_id,
                        "label": prop.label.value,
                        "source": prop.source.as_dict(),
                        "round": prop.round,
                    }
                )

        self.cycle += 1
        self._retrain()
        self.revision += 1
        return SubmitResult(
            accepted=len(accepted),
            rejected=tuple(rejected),
            propagated_count=propagated_count,
            cycle=self.cycle,
            revision=self.revision,
            metrics=self.metrics_history[-1],
        )

    def status(self) -> dict:
        return {
            "cycle": self.cycle,
            "n_cycles": self.config.n_cycles,
            "labeled_count": len(self.labeled),
            "pool_count": len(self.pool),
            "session_revision": self.revision,
            "status": "complete" if self.complete else "active",
            "metrics_history": [m.as_dict() for m in self.metrics_history],
        }


def run_active_cycle(
    session: ActiveSession,
    oracle: Callable[[LabelRequest], LabelResponse],
) -> SubmitResult:
    """Run one full cycle against a label provider.

    All oracle answers are collected before anything mutates, so an oracle
    abort (any exception) leaves the session unchanged and resumable.
    """
    batch = session.current_batch()
    responses = []
    for item in batch.items:
        responses.append(
            oracle(
                LabelRequest(
                    cycle=batch.cycle,
                    tweet_id=item.tweet_id,
                    text=item.text,
                    proba=item.proba,
                )
            )
        )
    return session.submit(responses, expected_revision=batch.revision)


def replay_audit_log(
    matrix: FeatureMatrix,
    texts: Mapping[str, str],
    seed_labels: Mapping[str, Label],
    events: Iterable[dict],
    config: ActiveConfig | None = None,
) -> ActiveSession:
    """Rebuild a session from its seed state plus the recorded label events.

    Propagation and retraining are deterministic, so replaying only the human
    label events reproduces the full final state.
    """
    session = ActiveSession(matrix, texts, seed_labels, config=config)
    by_cycle: dict[int, list[LabelResponse]] = {}
    for event in events:
        if event.get("event") != "label" or event["source"]["kind"] != "human":
            continue
        if event["source"].get("annotator_id") == "seed":
            continue
        by_cycle.setdefault(event["cycle"], []).append(
            LabelResponse(
                tweet_id=event["tweet_id"],
                label=Label(event["label"]),
                annotator_id=event["source"].get("annotator_id", ""),
            )
        )
    for cycle in sorted(by_cycle):
        session.submit(by_cycle[cycle])
    return session


def load_audit_log(path: str | Path) -> list[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
