"""Tweet ingestion: line-delimited JSON loading, normalization, deduplication, time slicing."""

from __future__ import annotations

import json
import re
import unicodedata
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Iterable, Iterator

_RT_PREFIX = re.compile(r"^\s*rt\s+@\w+:\s*")
_URL = re.compile(r"(?:https?://|www\.)\S+")

JSONL_FIELDS = (
    "id",
    "text",
    "created_at",
    "lang",
    "author_id",
    "reply_to_id",
    "retweet_of_id",
    "urls",
    "source_domain",
)


@dataclass(frozen=True)
class Tweet:
    """One normalized social-media record."""

    id: str
    text: str
    created_at: datetime
    lang: str = "und"
    author_id: str = ""
    reply_to_id: str | None = None
    retweet_of_id: str | None = None
    linked_urls: tuple[str, ...] = ()
    source_domain: str | None = None

    @property
    def normalized_text(self) -> str:
        return normalize_tweet(self.text)


@dataclass(frozen=True)
class TimeSlice:
    index: int
    start: datetime
    width: timedelta = timedelta(days=7)


@dataclass
class LoadReport:
    lines: int = 0
    parsed: int = 0
    skipped: int = 0
    language_rejected: int = 0

    def as_dict(self) -> dict:
        return {
            "lines": self.lines,
            "parsed": self.parsed,
            "skipped": self.skipped,
            "language_rejected": self.language_rejected,
        }


@dataclass
class DedupReport:
    kept: int = 0
    dropped: int = 0


def parse_timestamp(value: str) -> datetime:
    """Parse an ISO-8601 timestamp to an aware UTC datetime, truncated to seconds."""
    raw = value.strip()
    if raw.endswith(("Z", "z")):
        raw = raw[:-1] + "+00:00"
    dt = datetime.fromisoformat(raw)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc).replace(microsecond=0)


def format_timestamp(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def normalize_tweet(text: str) -> str:
    """Canonical text form used for deduplication and similarity.

    NFC, lowercase, leading "rt @handle:" marker stripped, URLs removed,
    whitespace collapsed. Total and deterministic.
    """
    t = unicodedata.normalize("NFC", text).lower()
    t = _RT_PREFIX.sub("", t, count=1)
    t = _URL.sub(" ", t)
    return " ".join(t.split())


def _tweet_from_record(rec: dict) -> Tweet:
    tweet_id = rec["id"]
    text = rec["text"]
    if not isinstance(tweet_id, str) or not tweet_id:
        raise ValueError("id must be a non-empty string")
    if not isinstance(text, str):
        raise ValueError("text must be a string")
    urls = rec.get("urls") or ()
    return Tweet(
        id=tweet_id,
        text=text,
        created_at=parse_timestamp(rec["created_at"]),
        lang=rec.get("lang") or "und",
        author_id=rec.get("author_id") or "",
        reply_to_id=rec.get("reply_to_id") or None,
        retweet_of_id=rec.get("retweet_of_id") or None,
        linked_urls=tuple(urls),
        source_domain=rec.get("source_domain") or None,
    )


def _lang_matches(lang: str, lang_filter: str) -> bool:
    # Prefix match on the tag: "en" accepts "en" and "en-GB".
    return lang == lang_filter or lang.startswith(lang_filter + "-")


def load_jsonl(
    path: str | Path,
    lang_filter: str | None = None,
    report: LoadReport | None = None,
) -> Iterator[Tweet]:
    """Stream tweets from a JSONL file, skipping malformed lines.

    Malformed lines (bad JSON, missing/invalid required fields) are counted in
    ``report.skipped`` and never raised. An unreadable file raises at once.
    The report is complete once the iterator is exhausted.
    """
    if report is None:
        report = LoadReport()
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            report.lines += 1
            try:
                rec = json.loads(line)
                if not isinstance(rec, dict):
                    raise ValueError("line is not a JSON object")
                tweet = _tweet_from_record(rec)
            except (ValueError, KeyError, TypeError):
                report.skipped += 1
                continue
            if lang_filter is not None and not _lang_matches(tweet.lang, lang_filter):
                report.language_rejected += 1
                continue
            report.parsed += 1
            yield tweet


def tweet_to_record(tweet: Tweet) -> dict:
    return {
        "id": tweet.id,
        "text": tweet.text,
        "created_at": format_timestamp(tweet.created_at),
        "lang": tweet.lang,
        "author_id": tweet.author_id,
        "reply_to_id": tweet.reply_to_id,
        "retweet_of_id": tweet.retweet_of_id,
        "urls": list(tweet.linked_urls),
        "source_domain": tweet.source_domain,
    }


def write_jsonl(tweets: Iterable[Tweet], path: str | Path) -> int:
    """Write tweets in the input JSONL schema. Returns the number written."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for tweet in tweets:
            fh.write(json.dumps(tweet_to_record(tweet), ensure_ascii=False) + "\n")
            n += 1
    return n


def deduplicate(
    tweets: Iterable[Tweet],
    key: str = "id",
    report: DedupReport | None = None,
) -> Iterator[Tweet]:
    """Drop later duplicates by ``id`` or ``normalized_text``, keeping first occurrences."""
    if key not in ("id", "normalized_text"):
        raise ValueError(f"unknown dedup key: {key!r}")
    if report is None:
        report = DedupReport()
    seen: set[str] = set()
    for tweet in tweets:
        k = tweet.id if key == "id" else tweet.normalized_text
        if k in seen:
            report.dropped += 1
            continue
        seen.add(k)
        report.kept += 1
        yield tweet


def assign_time_slice(
    tweet: Tweet, epoch: datetime, width: timedelta = timedelta(days=7)
) -> int:
    """Index of the slice containing ``tweet.created_at``; slices tile from ``epoch``."""
    if tweet.created_at < epoch:
        raise ValueError(
            f"tweet {tweet.id} created before epoch ({tweet.created_at} < {epoch})"
        )
    return (tweet.created_at - epoch) // width


def slice_count(epoch: datetime, end: datetime, width: timedelta = timedelta(days=7)) -> int:
    """Number of slices needed to cover every instant in [epoch, end]."""
    if end < epoch:
        raise ValueError("end precedes epoch")
    return (end - epoch) // width + 1


def time_slices(
    epoch: datetime, end: datetime, width: timedelta = timedelta(days=7)
) -> list[TimeSlice]:
    return [
        TimeSlice(index=i, start=epoch + i * width, width=width)
        for i in range(slice_count(epoch, end, width))
    ]
