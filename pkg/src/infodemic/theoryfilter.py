"""Per-theory regex filters and corpus partitioning with overlap accounting."""

from __future__ import annotations

import configparser
import csv
import re
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Iterable

from .corpus import Tweet


class TheoryPatternError(ValueError):
    """A theory config pattern failed to compile."""


@dataclass(frozen=True)
class TheoryConfig:
    name: str
    include_patterns: tuple[str, ...]
    case_insensitive: bool = True


@dataclass(frozen=True)
class CompiledTheory:
    name: str
    patterns: tuple[re.Pattern, ...]

    def matches(self, text: str) -> bool:
        return any(p.search(text) for p in self.patterns)


@dataclass
class PartitionReport:
    per_theory_count: dict[str, int]
    multi_theory_count: dict[str, int]
    pairwise_overlap: dict[tuple[str, str], int]
    total_unique: int

    def percentage(self, theory: str) -> float:
        """Theory share of the union of all matched tweets, in percent."""
        if self.total_unique == 0:
            return 0.0
        return 100.0 * self.per_theory_count[theory] / self.total_unique

    def multi_percentage(self, theory: str) -> float:
        """Share of the theory's tweets that also match another theory, in percent."""
        n = self.per_theory_count[theory]
        if n == 0:
            return 0.0
        return 100.0 * self.multi_theory_count[theory] / n

    def overlap(self, a: str, b: str) -> int:
        return self.pairwise_overlap.get(_pair_key(a, b), 0)


def _pair_key(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a <= b else (b, a)


def compile_theory(config: TheoryConfig) -> CompiledTheory:
    flags = re.IGNORECASE if config.case_insensitive else 0
    compiled = []
    for pattern in config.include_patterns:
        try:
            compiled.append(re.compile(pattern, flags))
        except re.error as exc:
            raise TheoryPatternError(
                f"theory {config.name!r}: pattern {pattern!r} does not compile: {exc}"
            ) from exc
    return CompiledTheory(name=config.name, patterns=tuple(compiled))


def match_theories(tweet: Tweet, theories: Iterable[CompiledTheory]) -> set[str]:
    """Names of the theories whose matcher fires on the raw tweet text."""
    return {t.name for t in theories if t.matches(tweet.text)}


def partition_corpus(
    tweets: Iterable[Tweet], theories: list[CompiledTheory]
) -> tuple[dict[str, list[Tweet]], PartitionReport]:
    """Copy each tweet into every matching theory dataset and account for overlaps.

    Deterministic and order-independent in the report: counts are per-tweet
    properties merged additively.
    """
    names = [t.name for t in theories]
    datasets: dict[str, list[Tweet]] = {name: [] for name in names}
    per_theory = {name: 0 for name in names}
    multi = {name: 0 for name in names}
    pairwise = {_pair_key(a, b): 0 for a, b in combinations(sorted(names), 2)}
    total_unique = 0

    for tweet in tweets:
        matched = sorted(match_theories(tweet, theories))
        if not matched:
            continue
        total_unique += 1
        for name in matched:
            datasets[name].append(tweet)
            per_theory[name] += 1
            if len(matched) > 1:
                multi[name] += 1
        for a, b in combinations(matched, 2):
            pairwise[_pair_key(a, b)] += 1

    report = PartitionReport(
        per_theory_count=per_theory,
        multi_theory_count=multi,
        pairwise_overlap=pairwise,
        total_unique=total_unique,
    )
    return datasets, report


def load_theory_config(path: str | Path) -> list[TheoryConfig]:
    """Read theory definitions from an INI-style file.

    One section per theory; ``patterns`` is a multi-line value with one regex
    per line; optional ``case_insensitive`` (default true). Comments use ";"
    because "#" is meaningful inside patterns (hashtags).
    """
    parser = configparser.ConfigParser(comment_prefixes=(";",), inline_comment_prefixes=None)
    read = parser.read(path)
    if not read:
        raise FileNotFoundError(path)
    configs = []
    for name in parser.sections():
        section = parser[name]
        raw = section.get("patterns", "")
        patterns = tuple(line.strip() for line in raw.splitlines() if line.strip())
        if not patterns:
            raise ValueError(f"theory {name!r} defines no patterns")
        configs.append(
            TheoryConfig(
                name=name,
                include_patterns=patterns,
                case_insensitive=section.getboolean("case_insensitive", fallback=True),
            )
        )
    if not configs:
        raise ValueError(f"no theories defined in {path}")
    names = [c.name for c in configs]
    if len(set(names)) != len(names):
        raise ValueError("duplicate theory names in config")
    return configs


def write_partition_csv(report: PartitionReport, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["theory", "count", "pct", "multi_count", "multi_pct"])
        for name in sorted(report.per_theory_count):
            writer.writerow(
                [
                    name,
                    report.per_theory_count[name],
                    f"{report.percentage(name):.2f}",
                    report.multi_theory_count[name],
                    f"{report.multi_percentage(name):.2f}",
                ]
            )


def write_overlap_csv(report: PartitionReport, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["theory_a", "theory_b", "count"])
        for (a, b) in sorted(report.pairwise_overlap):
            writer.writerow([a, b, report.pairwise_overlap[(a, b)]])
