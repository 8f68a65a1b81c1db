"""Lexicon sentiment scoring: signed integer scale, ten emotion/polarity
categories, and per-day per-class aggregation."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping, Sequence

logger = logging.getLogger(__name__)

EMOTION_CATEGORIES = (
    "anger",
    "anticipation",
    "disgust",
    "fear",
    "joy",
    "sadness",
    "surprise",
    "trust",
    "positive",
    "negative",
)

CLASS_LABELS = ("misinfo", "not_misinfo")


def load_signed_lexicon(path: str | Path) -> dict[str, int]:
    """Tab-separated ``term<TAB>score`` with integer scores in [-5, +5]."""
    lexicon: dict[str, int] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected term<TAB>score")
            term, raw = parts
            try:
                score = int(raw)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: score {raw!r} is not an integer") from None
            if not -5 <= score <= 5:
                raise ValueError(f"{path}:{lineno}: score {score} outside [-5, 5]")
            term = term.strip().lower()
            if term in lexicon:
                logger.warning("%s:%d: duplicate term %r, last entry wins", path, lineno, term)
            lexicon[term] = score
    return lexicon


def load_emotion_lexicon(path: str | Path) -> dict[str, frozenset[str]]:
    """Tab-separated ``term<TAB>category<TAB>{0,1}``, one line per pair."""
    assoc: dict[str, set[str]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected term<TAB>category<TAB>flag")
            term, category, flag = parts
            if category not in EMOTION_CATEGORIES:
                raise ValueError(f"{path}:{lineno}: unknown category {category!r}")
            if flag not in ("0", "1"):
                raise ValueError(f"{path}:{lineno}: flag must be 0 or 1, got {flag!r}")
            term = term.strip().lower()
            cats = assoc.setdefault(term, set())
            if flag == "1":
                cats.add(category)
            else:
                cats.discard(category)
    return {t: frozenset(c) for t, c in assoc.items()}


def load_lexicon(path: str | Path, kind: str):
    if kind == "signed":
        return load_signed_lexicon(path)
    if kind == "emotion":
        return load_emotion_lexicon(path)
    raise ValueError(f"unknown lexicon kind {kind!r}")


def score_signed(tokens: Sequence[str], lexicon: Mapping[str, int]) -> int:
    """Sum of per-token scores; missing tokens score 0, repeats count each time."""
    return sum(lexicon.get(tok, 0) for tok in tokens)


def score_emotions(tokens: Sequence[str], lexicon: Mapping[str, frozenset[str]]) -> dict[str, int]:
    """Token occurrences per category; one token may hit several categories."""
    counts = dict.fromkeys(EMOTION_CATEGORIES, 0)
    for tok in tokens:
        for cat in lexicon.get(tok, ()):
            counts[cat] += 1
    return counts


@dataclass(frozen=True)
class SentimentRecord:
    tweet_id: str
    afinn_sum: int
    emotion_counts: tuple[int, ...]  # ordered as EMOTION_CATEGORIES
    n_tokens: int

    def __post_init__(self):
        if len(self.emotion_counts) != len(EMOTION_CATEGORIES):
            raise ValueError("emotion_counts must cover all categories")
        if any(c < 0 or c > self.n_tokens for c in self.emotion_counts):
            raise ValueError("category counts must lie in [0, n_tokens]")


def score_tweet(
    tweet_id: str,
    tokens: Sequence[str],
    signed: Mapping[str, int],
    emotions: Mapping[str, frozenset[str]],
) -> SentimentRecord:
    counts = score_emotions(tokens, emotions)
    return SentimentRecord(
        tweet_id=tweet_id,
        afinn_sum=score_signed(tokens, signed),
        emotion_counts=tuple(counts[c] for c in EMOTION_CATEGORIES),
        n_tokens=len(tokens),
    )


@dataclass(frozen=True)
class AggregateRow:
    date: str  # YYYY-MM-DD, UTC
    class_label: str
    afinn_mean: float
    emotion_means: tuple[float, ...]
    n: int


def aggregate_series(
    records: Iterable[SentimentRecord],
    labels: Mapping[str, str],
    timestamps: Mapping[str, datetime],
    granularity: str = "daily",
) -> list[AggregateRow]:
    """Mean signed score and mean per-category counts per (UTC day, class).

    Records without a class label are excluded. Cells with no data are not
    emitted (missing, not zero). Rows come back sorted by (date, class).
    """
    if granularity != "daily":
        raise ValueError(f"unsupported granularity {granularity!r}")
    buckets: dict[tuple[str, str], list[SentimentRecord]] = {}
    for rec in records:
        cls = labels.get(rec.tweet_id)
        if cls is None:
            continue
        if cls not in CLASS_LABELS:
            raise ValueError(f"unknown class {cls!r} for {rec.tweet_id}")
        ts = timestamps[rec.tweet_id]
        day = ts.astimezone(timezone.utc).strftime("%Y-%m-%d")
        buckets.setdefault((day, cls), []).append(rec)
    rows = []
    for (day, cls) in sorted(buckets):
        group = buckets[(day, cls)]
        n = len(group)
        afinn_mean = sum(r.afinn_sum for r in group) / n
        emotion_means = tuple(
            sum(r.emotion_counts[i] for r in group) / n
            for i in range(len(EMOTION_CATEGORIES))
        )
        rows.append(AggregateRow(day, cls, afinn_mean, emotion_means, n))
    return rows


def write_series_csv(rows: Sequence[AggregateRow], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["date", "class", "afinn_mean", *(f"{c}_mean" for c in EMOTION_CATEGORIES), "n"]
        )
        for row in rows:
            writer.writerow(
                [
                    row.date,
                    row.class_label,
                    f"{row.afinn_mean:.6f}",
                    *(f"{v:.6f}" for v in row.emotion_means),
                    row.n,
                ]
            )
