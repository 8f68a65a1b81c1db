from datetime import datetime, timezone

import numpy as np
import pytest

from infodemic import data_path
from infodemic.sentiment import (
    EMOTION_CATEGORIES,
    SentimentRecord,
    aggregate_series,
    load_emotion_lexicon,
    load_lexicon,
    load_signed_lexicon,
    score_emotions,
    score_signed,
    score_tweet,
    write_series_csv,
)

UTC = timezone.utc


class TestLoadSigned:
    def test_bundled_fixture_entry(self):
        lex = load_signed_lexicon(data_path("signed_lexicon_fixture.txt"))
        assert lex["good"] == 3
        assert lex["hoax"] == -3
        assert all(-5 <= v <= 5 for v in lex.values())

    def test_duplicate_last_wins(self, tmp_path, caplog):
        path = tmp_path / "lex.txt"
        path.write_text("good\t3\ngood\t1\n", encoding="utf-8")
        with caplog.at_level("WARNING"):
            lex = load_signed_lexicon(path)
        assert lex["good"] == 1
        assert "duplicate" in caplog.text

    def test_malformed_line_reports_lineno(self, tmp_path):
        path = tmp_path / "lex.txt"
        path.write_text("good\t3\nbad line without tab\n", encoding="utf-8")
        with pytest.raises(ValueError, match=":2"):
            load_signed_lexicon(path)

    def test_out_of_range_score_rejected(self, tmp_path):
        path = tmp_path / "lex.txt"
        path.write_text("good\t7\n", encoding="utf-8")
        with pytest.raises(ValueError):
            load_signed_lexicon(path)

    def test_empty_file_ok(self, tmp_path):
        path = tmp_path / "lex.txt"
        path.write_text("", encoding="utf-8")
        assert load_signed_lexicon(path) == {}


class TestLoadEmotion:
    def test_bundled_fixture_entry(self):
        lex = load_emotion_lexicon(data_path("emotion_lexicon_fixture.txt"))
        assert "fear" in lex["abandon"]
        assert "negative" in lex["abandon"]

    def test_zero_flag_clears(self, tmp_path):
        path = tmp_path / "lex.txt"
        path.write_text("word\tfear\t1\nword\tfear\t0\n", encoding="utf-8")
        assert load_emotion_lexicon(path)["word"] == frozenset()

    def test_unknown_category_rejected(self, tmp_path):
        path = tmp_path / "lex.txt"
        path.write_text("word\tboredom\t1\n", encoding="utf-8")
        with pytest.raises(ValueError, match="boredom"):
            load_emotion_lexicon(path)

    def test_kind_dispatcher(self, tmp_path):
        path = tmp_path / "lex.txt"
        path.write_text("word\tfear\t1\n", encoding="utf-8")
        assert load_lexicon(path, "emotion")["word"] == frozenset({"fear"})
        with pytest.raises(ValueError):
            load_lexicon(path, "other")


class TestScoring:
    def test_empty_tokens(self):
        assert score_signed([], {"good": 3}) == 0

    def test_additive(self):
        lex = {"good": 3, "bad": -2}
        assert score_signed(["good", "bad", "unknown"], lex) == 1

    def test_repeats_count_each_occurrence(self):
        assert score_signed(["good", "good"], {"good": 3}) == 6

    def test_multi_category_token(self):
        lex = {"danger": frozenset({"fear", "negative"})}
        counts = score_emotions(["danger"], lex)
        assert counts["fear"] == 1 and counts["negative"] == 1
        assert sum(counts.values()) == 2

    def test_empty_gives_all_zeros(self):
        counts = score_emotions([], {})
        assert set(counts) == set(EMOTION_CATEGORIES)
        assert all(v == 0 for v in counts.values())

    def test_signed_matches_bruteforce_on_random_tweets(self):
        rng = np.random.default_rng(0)
        lex = {f"w{i}": int(rng.integers(-5, 6)) for i in range(40)}
        words = list(lex) + ["oov1", "oov2"]
        for _ in range(1000):
            tokens = [words[int(i)] for i in rng.integers(0, len(words), size=rng.integers(0, 15))]
            expected = sum(lex.get(t, 0) for t in tokens)
            assert score_signed(tokens, lex) == expected

    def test_emotions_match_bruteforce_scan(self):
        rng = np.random.default_rng(1)
        cats = list(EMOTION_CATEGORIES)
        lex = {
            f"w{i}": frozenset(rng.choice(cats, size=rng.integers(0, 4), replace=False))
            for i in range(30)
        }
        tokens = [f"w{int(i)}" for i in rng.integers(0, 35, size=50)]
        got = score_emotions(tokens, lex)
        for cat in cats:
            expected = sum(1 for t in tokens if cat in lex.get(t, frozenset()))
            assert got[cat] == expected

    def test_linearity(self):
        rng = np.random.default_rng(2)
        lex = {f"w{i}": int(rng.integers(-5, 6)) for i in range(20)}
        words = list(lex)
        for _ in range(200):
            a = [words[int(i)] for i in rng.integers(0, 20, size=rng.integers(0, 8))]
            b = [words[int(i)] for i in rng.integers(0, 20, size=rng.integers(0, 8))]
            assert score_signed(a + b, lex) == score_signed(a, lex) + score_signed(b, lex)

    def test_monotone_in_positive_tokens(self):
        lex = {"nice": 2}
        base = ["x", "y"]
        assert score_signed(base + ["nice"], lex) >= score_signed(base, lex)

    def test_record_invariant_enforced(self):
        with pytest.raises(ValueError):
            SentimentRecord("t", 0, tuple([5] + [0] * 9), n_tokens=2)

    def test_score_tweet_counts_bounded(self):
        lex_s = {"danger": -2}
        lex_e = {"danger": frozenset({"fear", "negative"})}
        rec = score_tweet("t1", ["danger", "danger", "x"], lex_s, lex_e)
        assert rec.afinn_sum == -4
        assert rec.n_tokens == 3
        assert max(rec.emotion_counts) <= rec.n_tokens


class TestAggregation:
    def record(self, tweet_id, afinn):
        return SentimentRecord(tweet_id, afinn, tuple([0] * 10), n_tokens=1)

    def test_single_record_per_cell_is_identity(self):
        records = [self.record("a", 2), self.record("b", -4)]
        labels = {"a": "misinfo", "b": "not_misinfo"}
        stamps = {
            "a": datetime(2020, 2, 1, 10, tzinfo=UTC),
            "b": datetime(2020, 2, 1, 11, tzinfo=UTC),
        }
        rows = aggregate_series(records, labels, stamps)
        assert len(rows) == 2
        assert rows[0].class_label == "misinfo" and rows[0].afinn_mean == 2

    def test_same_day_mean(self):
        records = [self.record("a", 2), self.record("b", -4)]
        labels = {"a": "misinfo", "b": "misinfo"}
        stamps = {k: datetime(2020, 2, 1, tzinfo=UTC) for k in labels}
        rows = aggregate_series(records, labels, stamps)
        assert len(rows) == 1
        assert rows[0].afinn_mean == -1
        assert rows[0].n == 2

    def test_empty_cells_missing_not_zero(self):
        records = [self.record("a", 1)]
        rows = aggregate_series(records, {"a": "misinfo"}, {"a": datetime(2020, 3, 1, tzinfo=UTC)})
        assert [(r.date, r.class_label) for r in rows] == [("2020-03-01", "misinfo")]

    def test_unlabeled_records_excluded(self):
        records = [self.record("a", 1), self.record("zz", 5)]
        rows = aggregate_series(records, {"a": "misinfo"}, {"a": datetime(2020, 3, 1, tzinfo=UTC)})
        assert len(rows) == 1

    def test_matches_groupby_bruteforce(self):
        rng = np.random.default_rng(5)
        records, labels, stamps = [], {}, {}
        for i in range(300):
            tweet_id = f"t{i}"
            counts = tuple(int(c) for c in rng.integers(0, 3, size=10))
            records.append(SentimentRecord(tweet_id, int(rng.integers(-8, 9)), counts, n_tokens=5))
            labels[tweet_id] = "misinfo" if rng.random() < 0.5 else "not_misinfo"
            stamps[tweet_id] = datetime(2020, 3, 1 + int(rng.integers(0, 28)), tzinfo=UTC)
        rows = aggregate_series(records, labels, stamps)
        # brute force
        cells = {}
        for rec in records:
            key = (stamps[rec.tweet_id].strftime("%Y-%m-%d"), labels[rec.tweet_id])
            cells.setdefault(key, []).append(rec)
        assert len(rows) == len(cells)
        for row in rows:
            group = cells[(row.date, row.class_label)]
            assert row.n == len(group)
            assert row.afinn_mean == pytest.approx(sum(r.afinn_sum for r in group) / len(group))
            for i in range(10):
                assert row.emotion_means[i] == pytest.approx(
                    sum(r.emotion_counts[i] for r in group) / len(group)
                )

    def test_csv_header(self, tmp_path):
        rows = aggregate_series(
            [self.record("a", 1)], {"a": "misinfo"}, {"a": datetime(2020, 3, 1, tzinfo=UTC)}
        )
        write_series_csv(rows, tmp_path / "series.csv")
        header = (tmp_path / "series.csv").read_text(encoding="utf-8").splitlines()[0]
        assert header.startswith("date,class,afinn_mean,anger_mean,")
        assert header.endswith("positive_mean,negative_mean,n")
