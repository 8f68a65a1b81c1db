"""Pipeline CLI: ingest, filter, sample, train, active, classify, sentiment,
dtm, report. Stages hand off through files only; identical inputs and seeds
give byte-identical outputs. Exit codes: 0 success, 2 usage, 1 runtime."""

from __future__ import annotations

import csv
import json
import sys
from datetime import timedelta
from pathlib import Path

import click
import numpy as np

from . import data_path
from .active import ActiveConfig, ActiveSession, Label, LabelRequest, LabelResponse, run_active_cycle
from .corpus import DedupReport, LoadReport, Tweet, deduplicate, load_jsonl, write_jsonl
from .forest import (
    ForestHyperparams,
    ForestModel,
    Metrics,
    evaluate,
    metrics_from_confusion,
    stratified_split,
    train_forest,
    write_metrics_csv,
)
from .lda import make_doc
from .report import (
    ReportWriter,
    line_chart_svg,
    loess_smooth,
    misinfo_percentage,
    overlap_graph,
    overlap_graph_svg,
)
from .sentiment import (
    aggregate_series,
    load_emotion_lexicon,
    load_signed_lexicon,
    score_tweet,
    write_series_csv,
)
from .textfeat import (
    FeatureMatrix,
    Vocabulary,
    build_feature_matrix,
    build_linkage_index,
    build_vocabulary,
    load_flagged_domains,
    load_stopwords,
    tokenize,
)
from .theoryfilter import (
    compile_theory,
    load_theory_config,
    partition_corpus,
    write_overlap_csv,
    write_partition_csv,
)

EXIT_RUNTIME = 1


def _fail(message: str) -> "click.ClickException":
    exc = click.ClickException(message)
    exc.exit_code = EXIT_RUNTIME
    return exc


def _load_corpus(path: str) -> list[Tweet]:
    report = LoadReport()
    tweets = list(load_jsonl(path, report=report))
    if report.skipped:
        click.echo(f"note: skipped {report.skipped} malformed lines in {path}", err=True)
    return tweets


def _read_labels(path: str) -> dict[str, Label]:
    labels: dict[str, Label] = {}
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "tweet_id" not in reader.fieldnames or "label" not in reader.fieldnames:
            raise _fail(f"{path}: expected CSV header with tweet_id,label")
        for row in reader:
            labels[row["tweet_id"]] = Label(row["label"])
    return labels


def _stopwords(path: str | None) -> frozenset[str]:
    return load_stopwords(path if path else data_path("stopwords.txt"))


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n", encoding="utf-8")


def _vocab_to_json(vocab: Vocabulary) -> dict:
    return {"terms": list(vocab.terms), "df": list(vocab.df), "n_docs": vocab.n_docs}


def _vocab_from_json(path: str) -> Vocabulary:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return Vocabulary(terms=tuple(doc["terms"]), df=tuple(doc["df"]), n_docs=doc["n_docs"])


def _feature_matrix(tweets, vocab, stopwords, domains_path, linkage_tweets=None) -> FeatureMatrix:
    flagged = load_flagged_domains(domains_path) if domains_path else frozenset()
    index = build_linkage_index(linkage_tweets if linkage_tweets is not None else tweets)
    return build_feature_matrix(tweets, vocab, stopwords, flagged, index)


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="JSON file of per-subcommand flag defaults: {\"train\": {\"seed\": 7}}.")
@click.option("--threads", type=int, default=1, show_default=True, help="Worker threads for tree fitting.")
@click.pass_context
def cli(ctx, config_path, threads):
    """Conspiracy-theory tweet pipeline."""
    if config_path:
        ctx.default_map = json.loads(Path(config_path).read_text(encoding="utf-8"))
    ctx.ensure_object(dict)
    ctx.obj["threads"] = threads


@cli.command()
@click.option("--input", "input_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--output", "output_path", required=True, type=click.Path(dir_okay=False))
@click.option("--lang", default=None, help="Keep only records whose lang tag matches this prefix.")
@click.option("--dedup", type=click.Choice(["id", "normalized_text", "none"]), default="id", show_default=True)
def ingest(input_path, output_path, lang, dedup):
    """Normalize a raw JSONL file into a clean corpus."""
    load_report = LoadReport()
    stream = load_jsonl(input_path, lang_filter=lang, report=load_report)
    dedup_report = DedupReport()
    if dedup != "none":
        stream = deduplicate(stream, key=dedup, report=dedup_report)
    written = write_jsonl(stream, output_path)
    summary = {**load_report.as_dict(), "dropped_duplicates": dedup_report.dropped, "written": written}
    click.echo(json.dumps(summary, sort_keys=True))


@cli.command("filter")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--theories", "theories_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Theory config file; defaults to the bundled illustrative config.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def filter_cmd(corpus_path, theories_path, out_dir):
    """Partition the corpus into per-theory datasets with an overlap report."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    configs = load_theory_config(theories_path if theories_path else data_path("theories.cfg"))
    theories = [compile_theory(c) for c in configs]
    tweets = _load_corpus(corpus_path)
    datasets, report = partition_corpus(tweets, theories)
    for name, subset in sorted(datasets.items()):
        write_jsonl(subset, out / f"{name}.jsonl")
    write_partition_csv(report, out / "partition_report.csv")
    write_overlap_csv(report, out / "overlap_edges.csv")
    click.echo(json.dumps({
        "total_unique": report.total_unique,
        "per_theory": dict(sorted(report.per_theory_count.items())),
    }, sort_keys=True))


@cli.command()
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--n", "n_sample", default=1000, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--output", "output_path", required=True, type=click.Path(dir_okay=False))
def sample(dataset_path, n_sample, seed, output_path):
    """Draw a training pool: random sample of N, then near-duplicate removal."""
    tweets = _load_corpus(dataset_path)
    rng = np.random.default_rng(seed)
    if n_sample < len(tweets):
        idx = np.sort(rng.choice(len(tweets), size=n_sample, replace=False))
        chosen = [tweets[i] for i in idx]
    else:
        chosen = tweets
    report = DedupReport()
    unique = list(deduplicate(chosen, key="normalized_text", report=report))
    write_jsonl(unique, output_path)
    click.echo(json.dumps({
        "sampled": len(chosen), "unique": len(unique), "dropped_duplicates": report.dropped,
    }, sort_keys=True))


def _forest_options(fn):
    fn = click.option("--trees", default=150, show_default=True, type=int)(fn)
    fn = click.option("--max-leaves", default=25, show_default=True, type=int)(fn)
    fn = click.option("--min-leaf", default=3, show_default=True, type=int)(fn)
    fn = click.option("--features-per-split", default=25, show_default=True, type=int)(fn)
    return fn


def _hyperparams(trees, max_leaves, min_leaf, features_per_split, seed) -> ForestHyperparams:
    return ForestHyperparams(
        n_trees=trees,
        max_terminal_nodes=max_leaves,
        min_leaf_size=min_leaf,
        features_per_split=features_per_split,
        seed=seed,
    )


@cli.command()
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--labels", "labels_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--domains", "domains_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--stopwords", "stopwords_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--min-df", default=0.0005, show_default=True, type=float)
@click.option("--train-fraction", default=2 / 3, show_default=True, type=float)
@click.option("--balance/--no-balance", default=True, show_default=True)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--theory", default=None, help="Row label in metrics.csv; defaults to the dataset stem.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@_forest_options
@click.pass_context
def train(ctx, dataset_path, labels_path, domains_path, stopwords_path, min_df,
          train_fraction, balance, seed, theory, out_dir, trees, max_leaves, min_leaf, features_per_split):
    """Split, balance, fit the forest, and evaluate on the held-out third."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    theory = theory or Path(dataset_path).stem
    tweets = _load_corpus(dataset_path)
    by_id = {t.id: t for t in tweets}
    labels = _read_labels(labels_path)
    labeled_ids = sorted(i for i, l in labels.items() if i in by_id and l is not Label.UNCERTAIN)
    if not labeled_ids:
        raise _fail("no definite labels overlap the dataset")
    stopwords = _stopwords(stopwords_path)
    labeled_tweets = [by_id[i] for i in labeled_ids]
    vocab = build_vocabulary([tokenize(t.text, stopwords) for t in labeled_tweets], min_df)
    matrix = _feature_matrix(labeled_tweets, vocab, stopwords, domains_path, linkage_tweets=tweets)
    y = {i: labels[i].as_int() for i in labeled_ids}
    train_ids, test_ids = stratified_split(labeled_ids, y, train_fraction, balance_train=balance, seed=seed)
    hp = _hyperparams(trees, max_leaves, min_leaf, features_per_split, seed)
    design = matrix.design_matrix().tocsr()
    row = {d: i for i, d in enumerate(matrix.doc_ids)}
    from .forest import ForestClassifier

    clf = ForestClassifier(n_jobs=ctx.obj.get("threads", 1), **hp.as_dict())
    clf.fit(
        design[[row[i] for i in train_ids]],
        np.array([y[i] for i in train_ids], dtype=np.int64),
        doc_ids=train_ids,
        vocab_hash=vocab.content_hash(),
    )
    model = clf.model_
    metrics = evaluate(model, design[[row[i] for i in test_ids]], np.array([y[i] for i in test_ids]))
    (out / "model.json").write_text(model.to_json() + "\n", encoding="utf-8")
    _write_json(out / "vocab.json", _vocab_to_json(vocab))
    _write_json(out / "split.json", {"train": train_ids, "test": test_ids})
    write_metrics_csv([(theory, "random_forest", metrics, None)], out / "metrics.csv")
    _write_json(out / "config_used.json", {
        "dataset": str(dataset_path), "labels": str(labels_path), "min_df": min_df,
        "train_fraction": train_fraction, "balance": balance, "seed": seed,
        "hyperparams": hp.as_dict(), "theory": theory,
    })
    click.echo(json.dumps({"theory": theory, **metrics.as_dict()}, sort_keys=True))


def _load_model_and_vocab(model_path, vocab_path) -> tuple[ForestModel, Vocabulary]:
    model = ForestModel.from_json(Path(model_path).read_text(encoding="utf-8"))
    vocab = _vocab_from_json(vocab_path)
    if model.vocab_hash and model.vocab_hash != vocab.content_hash():
        raise _fail("vocab.json does not match the vocabulary hash stored in the model")
    return model, vocab


@cli.command()
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--vocab", "vocab_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--domains", "domains_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--stopwords", "stopwords_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--theory", default=None)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def classify(dataset_path, model_path, vocab_path, domains_path, stopwords_path, theory, out_dir):
    """Label a full theory dataset with a trained model."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    theory = theory or Path(dataset_path).stem
    model, vocab = _load_model_and_vocab(model_path, vocab_path)
    tweets = _load_corpus(dataset_path)
    if not tweets:
        raise _fail(f"{dataset_path} holds no tweets")
    stopwords = _stopwords(stopwords_path)
    matrix = _feature_matrix(tweets, vocab, stopwords, domains_path)
    probas = model.predict_proba(matrix.design_matrix())
    with open(out / "classified.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tweet_id", "label", "proba"])
        for tweet, p in zip(tweets, probas):
            label = Label.MISINFO if p >= 0.5 else Label.NOT_MISINFO
            writer.writerow([tweet.id, label.value, f"{p:.6f}"])
    misinfo = int((probas >= 0.5).sum())
    with open(out / "summary.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["theory", "total", "misinfo_count", "misinfo_pct"])
        writer.writerow([theory, len(tweets), misinfo, f"{misinfo_percentage(misinfo, len(tweets)):.2f}"])
    click.echo(json.dumps({"theory": theory, "total": len(tweets), "misinfo": misinfo}, sort_keys=True))


@cli.command()
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--classified", "classified_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--signed-lexicon", "signed_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="term<TAB>score lexicon; defaults to the bundled fixture.")
@click.option("--emotion-lexicon", "emotion_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="term<TAB>category<TAB>flag lexicon; defaults to the bundled fixture.")
@click.option("--stopwords", "stopwords_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def sentiment(dataset_path, classified_path, signed_path, emotion_path, stopwords_path, out_dir):
    """Score tweets against both lexicons and aggregate per day and class."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    signed = load_signed_lexicon(signed_path if signed_path else data_path("signed_lexicon_fixture.txt"))
    emotions = load_emotion_lexicon(emotion_path if emotion_path else data_path("emotion_lexicon_fixture.txt"))
    stopwords = _stopwords(stopwords_path)
    tweets = _load_corpus(dataset_path)
    classes: dict[str, str] = {}
    with open(classified_path, "r", newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            classes[row["tweet_id"]] = row["label"]
    records = [
        score_tweet(t.id, tokenize(t.text, stopwords), signed, emotions) for t in tweets
    ]
    rows = aggregate_series(records, classes, {t.id: t.created_at for t in tweets})
    write_series_csv(rows, out / "sentiment_series.csv")
    _write_json(out / "config_used.json", {
        "dataset": str(dataset_path), "classified": str(classified_path),
        "signed_lexicon": str(signed_path) if signed_path else "bundled",
        "emotion_lexicon": str(emotion_path) if emotion_path else "bundled",
    })
    click.echo(json.dumps({"rows": len(rows), "tweets": len(records)}, sort_keys=True))


def _slice_docs(tweets, stopwords, vocab, epoch, width_days):
    """Group tweets into weekly slices of (term_ids, counts) docs over vocab."""
    from .corpus import assign_time_slice, slice_count
    from .textfeat import bigram_terms

    width = timedelta(days=width_days)
    last = max(t.created_at for t in tweets)
    n_slices = slice_count(epoch, last, width)
    slices = [[] for _ in range(n_slices)]
    kept = 0
    for tweet in tweets:
        tokens = tokenize(tweet.text, stopwords)
        terms = tokens + bigram_terms(tokens)
        counts: dict[int, int] = {}
        for term in terms:
            idx = vocab.index_of(term)
            if idx is not None:
                counts[idx] = counts.get(idx, 0) + 1
        if not counts:
            continue
        ids = sorted(counts)
        slices[assign_time_slice(tweet, epoch, width)].append(
            make_doc(ids, [counts[i] for i in ids])
        )
        kept += 1
    return slices, kept


@cli.command()
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--classified", "classified_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Restrict to tweets labeled misinfo in this classification output.")
@click.option("--k-min", default=2, show_default=True, type=int)
@click.option("--k-max", default=5, show_default=True, type=int)
@click.option("--width-days", default=7, show_default=True, type=int)
@click.option("--epoch", default=None, help="Slice epoch (ISO-8601); defaults to the earliest tweet.")
@click.option("--min-df", default=0.0005, show_default=True, type=float)
@click.option("--holdout", default=0.1, show_default=True, type=float,
              help="Per-slice document fraction held out for the K comparison.")
@click.option("--stopwords", "stopwords_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def dtm(dataset_path, classified_path, k_min, k_max, width_days, epoch, min_df,
        holdout, stopwords_path, seed, out_dir):
    """Fit dynamic topic models for each K in range and export comparison reports.

    The optimal K is a qualitative call; this emits the evidence (held-out
    likelihood plus top-word tables) and selects nothing.
    """
    from .corpus import parse_timestamp
    from .dtm import DtmConfig, fit_dtm

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not 2 <= k_min <= k_max <= 5:
        raise click.UsageError("need 2 <= k-min <= k-max <= 5")
    tweets = _load_corpus(dataset_path)
    if classified_path:
        keep = set()
        with open(classified_path, "r", newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                if row["label"] == Label.MISINFO.value:
                    keep.add(row["tweet_id"])
        tweets = [t for t in tweets if t.id in keep]
    if not tweets:
        raise _fail("no tweets to model")
    stopwords = _stopwords(stopwords_path)
    vocab = build_vocabulary([tokenize(t.text, stopwords) for t in tweets], min_df)
    epoch_dt = parse_timestamp(epoch) if epoch else min(t.created_at for t in tweets)
    slices, kept = _slice_docs(tweets, stopwords, vocab, epoch_dt, width_days)
    rng = np.random.default_rng(seed)
    train_slices, held_slices = [], []
    for docs in slices:
        n_hold = int(holdout * len(docs))
        if len(docs) - n_hold < 1:
            n_hold = 0
        held_idx = set(rng.choice(len(docs), size=n_hold, replace=False).tolist()) if n_hold else set()
        train_slices.append([d for i, d in enumerate(docs) if i not in held_idx])
        held_slices.append([d for i, d in enumerate(docs) if i in held_idx])
    comparison = []
    for k in range(k_min, k_max + 1):
        config = DtmConfig(n_topics=k, seed=seed)
        model = fit_dtm(train_slices, config, terms=vocab.terms)
        model.save(out / f"dtm_k{k}_model.json")
        with open(out / f"dtm_k{k}_topics.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["slice", "topic", "rank", "term", "probability"])
            for t in range(model.n_slices_):
                for topic in range(k):
                    for rank, (term, prob) in enumerate(model.top_words(topic, t, min(10, len(vocab))), 1):
                        writer.writerow([t, topic, rank, term, f"{prob:.6f}"])
        tracked = sorted({term for t in range(model.n_slices_) for topic in range(k)
                          for term, _ in model.top_words(topic, t, 5)})
        with open(out / f"dtm_k{k}_trajectories.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["slice", "topic", "term", "probability"])
            for topic in range(k):
                for term in tracked:
                    for t, prob in enumerate(model.word_trajectory(topic, term)):
                        writer.writerow([t, topic, term, f"{prob:.6f}"])
        mass = model.slice_topic_mass()
        with open(out / f"dtm_k{k}_topic_mass.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["slice", "topic", "doc_mass", "doc_share", "token_mass", "token_share"])
            for t in range(model.n_slices_):
                for topic in range(k):
                    writer.writerow([
                        t, topic,
                        f"{mass.doc_mass[t, topic]:.6f}", f"{mass.doc_share[t, topic]:.6f}",
                        f"{mass.token_mass[t, topic]:.6f}", f"{mass.token_share[t, topic]:.6f}",
                    ])
        train_pll = model.per_word_log_likelihood(train_slices)
        held_pll = (
            model.per_word_log_likelihood(held_slices)
            if any(len(d) for d in held_slices) else None
        )
        comparison.append((k, train_pll, held_pll, len(model.elbo_trace_)))
    with open(out / "dtm_comparison.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "train_per_word_ll", "holdout_per_word_ll", "em_passes"])
        for k, train_pll, held_pll, passes in comparison:
            writer.writerow([k, f"{train_pll:.6f}", "" if held_pll is None else f"{held_pll:.6f}", passes])
    _write_json(out / "config_used.json", {
        "dataset": str(dataset_path), "k_min": k_min, "k_max": k_max,
        "width_days": width_days, "epoch": epoch, "min_df": min_df,
        "holdout": holdout, "seed": seed,
    })
    click.echo(json.dumps({
        "docs_modeled": kept, "slices": len(slices), "vocab": len(vocab),
        "k_range": [k_min, k_max],
    }, sort_keys=True))


@cli.command()
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--labels", "labels_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Seed labels CSV (tweet_id,label[,annotator_id]).")
@click.option("--domains", "domains_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--stopwords", "stopwords_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--min-df", default=0.0005, show_default=True, type=float)
@click.option("--k", "k_per_cycle", default=3, show_default=True, type=int)
@click.option("--cycles", default=9, show_default=True, type=int)
@click.option("--sim-threshold", default=0.95, show_default=True, type=float)
@click.option("--annotator", default="annotator", show_default=True)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--session-dir", "--out", "out_dir", required=True, type=click.Path(file_okay=False),
              help="Session directory (audit log, metric history).")
@click.option("--serve", is_flag=True, help="Serve the session over HTTP instead of the terminal prompt.")
@click.option("--addr", default="127.0.0.1:8600", show_default=True)
@click.option("--static-dir", type=click.Path(exists=True, file_okay=False), default=None,
              help="Built annotator UI to serve at /.")
@_forest_options
@click.pass_context
def active(ctx, dataset_path, labels_path, domains_path, stopwords_path, min_df, k_per_cycle,
           cycles, sim_threshold, annotator, seed, out_dir, serve, addr, static_dir,
           trees, max_leaves, min_leaf, features_per_split):
    """Run active-learning cycles with a terminal oracle, or serve the label UI."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tweets = _load_corpus(dataset_path)
    by_id = {t.id: t for t in tweets}
    seed_labels = {i: l for i, l in _read_labels(labels_path).items() if i in by_id}
    if not seed_labels:
        raise _fail("no seed labels overlap the dataset")
    stopwords = _stopwords(stopwords_path)
    vocab = build_vocabulary([tokenize(t.text, stopwords) for t in tweets], min_df)
    matrix = _feature_matrix(tweets, vocab, stopwords, domains_path)
    config = ActiveConfig(
        k_per_cycle=k_per_cycle,
        n_cycles=cycles,
        sim_threshold=sim_threshold,
        hyperparams=_hyperparams(trees, max_leaves, min_leaf, features_per_split, seed),
        seed=seed,
    )
    texts = {t.id: t.normalized_text for t in tweets}
    audit_file = out / "audit.jsonl"
    if audit_file.exists() and audit_file.stat().st_size > 0:
        # The audit log is the durable session: replay it and keep appending.
        from .active import load_audit_log, replay_audit_log

        session = replay_audit_log(matrix, texts, seed_labels, load_audit_log(audit_file), config=config)
        session.audit_path = audit_file
        click.echo(f"resumed session at cycle {session.cycle} from {audit_file}", err=True)
    else:
        session = ActiveSession(matrix, texts, seed_labels, config=config, audit_path=audit_file)
    if serve:
        from .labelserver import serve as serve_http

        click.echo(f"serving label API on http://{addr}{'' if static_dir is None else ' with UI'}")
        serve_http(session, addr=addr, static_dir=static_dir)
        return

    key_to_label = {"m": Label.MISINFO, "n": Label.NOT_MISINFO, "u": Label.UNCERTAIN}

    def prompt_oracle(request: LabelRequest) -> LabelResponse:
        click.echo(f"\n[cycle {request.cycle + 1}/{cycles}] p(misinfo)={request.proba:.3f}")
        click.echo(f"  {by_id[request.tweet_id].text}")
        key = click.prompt("  label (m)isinfo / (n)ot / (u)ncertain", type=click.Choice(["m", "n", "u"]))
        return LabelResponse(tweet_id=request.tweet_id, label=key_to_label[key], annotator_id=annotator)

    while not session.complete:
        result = run_active_cycle(session, prompt_oracle)
        m = result.metrics
        click.echo(
            f"cycle {result.cycle}/{cycles}: accepted={result.accepted} "
            f"propagated={result.propagated_count} f1={m.f1:.3f}"
        )
    history = [(f"cycle_{i}", "active_learning", m, None) for i, m in enumerate(session.metrics_history)]
    write_metrics_csv(history, out / "metrics_history.csv")
    click.echo(json.dumps(session.status(), sort_keys=True))


@cli.command()
@click.option("--run-dir", "run_dir", required=True, type=click.Path(exists=True, file_okay=False),
              help="Directory holding the earlier stages' outputs.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def report(run_dir, out_dir):
    """Collate stage outputs into final CSV/SVG artifacts plus a hashed manifest."""
    run = Path(run_dir)
    writer = ReportWriter(out_dir)

    for name in ("partition_report.csv", "overlap_edges.csv"):
        src = run / name
        if src.exists():
            writer.write_text(name, src.read_text(encoding="utf-8"))

    partition_path = run / "partition_report.csv"
    edges_path = run / "overlap_edges.csv"
    if partition_path.exists() and edges_path.exists():
        nodes = {}
        with open(partition_path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                nodes[row["theory"]] = int(row["count"])
        edges = {}
        with open(edges_path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                edges[(row["theory_a"], row["theory_b"])] = int(row["count"])
        from .report import OverlapGraph

        writer.write_text("overlap_graph.svg", overlap_graph_svg(OverlapGraph(nodes, edges)))

    theory_dirs = sorted(p for p in run.iterdir() if p.is_dir())

    metrics_rows = []
    for tdir in theory_dirs:
        path = tdir / "metrics.csv"
        if path.exists():
            with open(path, newline="", encoding="utf-8") as fh:
                metrics_rows.extend(list(csv.DictReader(fh)))
    if metrics_rows:
        baselines = {
            r["theory"]: float(r["f1"]) for r in metrics_rows if r["variant"] == "random_forest"
        }
        out_rows = []
        for r in sorted(metrics_rows, key=lambda r: (r["theory"], r["variant"])):
            change = r.get("change", "")
            if not change and r["variant"] != "random_forest" and r["theory"] in baselines:
                change = f"{float(r['f1']) - baselines[r['theory']]:+.4f}"
            out_rows.append([r["theory"], r["variant"], r["accuracy"], r["recall"],
                             r["precision"], r["f1"], change])
        writer.write_csv(
            "metrics.csv",
            ["theory", "variant", "accuracy", "recall", "precision", "f1", "change"],
            out_rows,
        )

    misinfo_sets: dict[str, set[str]] = {}
    totals: dict[str, int] = {}
    for tdir in theory_dirs:
        classified = tdir / "classified.csv"
        if not classified.exists():
            continue
        ids = set()
        total = 0
        with open(classified, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                total += 1
                if row["label"] == Label.MISINFO.value:
                    ids.add(row["tweet_id"])
        misinfo_sets[tdir.name] = ids
        totals[tdir.name] = total
    if misinfo_sets:
        graph = overlap_graph(misinfo_sets)
        rows = []
        for theory in sorted(misinfo_sets):
            others = set().union(*(s for n, s in misinfo_sets.items() if n != theory)) if len(misinfo_sets) > 1 else set()
            multi = len(misinfo_sets[theory] & others)
            misinfo = len(misinfo_sets[theory])
            rows.append([
                theory, totals[theory], misinfo,
                f"{misinfo_percentage(misinfo, totals[theory]):.2f}",
                multi,
                f"{misinfo_percentage(multi, totals[theory]):.2f}",
            ])
        writer.write_csv(
            "misinfo_summary.csv",
            ["theory", "total", "misinfo_count", "misinfo_pct", "misinfo_multi", "misinfo_multi_pct"],
            rows,
        )
        writer.write_csv(
            "misinfo_overlap_edges.csv",
            ["theory_a", "theory_b", "count"],
            [[a, b, c] for (a, b), c in sorted(graph.edges.items())],
        )
        writer.write_text("misinfo_overlap_graph.svg", overlap_graph_svg(graph, "classified misinfo overlap"))

    for tdir in theory_dirs:
        series_path = tdir / "sentiment_series.csv"
        if not series_path.exists():
            continue
        writer.write_text(f"{tdir.name}_sentiment_series.csv", series_path.read_text(encoding="utf-8"))
        by_class: dict[str, list[tuple[float, float]]] = {}
        with open(series_path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                from datetime import datetime, timezone

                day = datetime.strptime(row["date"], "%Y-%m-%d").replace(tzinfo=timezone.utc)
                by_class.setdefault(row["class"], []).append(
                    (day.timestamp() / 86400.0, float(row["afinn_mean"]))
                )
        series = []
        for cls in sorted(by_class):
            pts = sorted(by_class[cls])
            xs = np.array([p[0] for p in pts])
            ys = np.array([p[1] for p in pts])
            series.append((cls, xs, ys))
            if len(pts) >= 3 and np.ceil(0.75 * len(pts)) >= 2:
                smooth = loess_smooth(pts, span=0.75)
                series.append((f"{cls} (loess)", smooth.smoothed_x, smooth.smoothed_y))
        if series:
            writer.write_text(
                f"{tdir.name}_sentiment_trend.svg",
                line_chart_svg(series, f"{tdir.name}: mean signed sentiment by day"),
            )

    for tdir in theory_dirs:
        for path in sorted(tdir.glob("dtm_k*_*.csv")):
            writer.write_text(f"{tdir.name}_{path.name}", path.read_text(encoding="utf-8"))
        for path in sorted(tdir.glob("dtm_k*_topic_mass.csv")):
            k = path.name.split("_")[1]
            rows_by_topic: dict[int, list[tuple[float, float]]] = {}
            with open(path, newline="", encoding="utf-8") as fh:
                for row in csv.DictReader(fh):
                    rows_by_topic.setdefault(int(row["topic"]), []).append(
                        (float(row["slice"]), float(row["doc_share"]))
                    )
            series = [
                (f"topic {topic}", np.array([p[0] for p in pts]), np.array([p[1] for p in pts]))
                for topic, pts in sorted(rows_by_topic.items())
            ]
            writer.write_text(
                f"{tdir.name}_dtm_{k}_topic_mass.svg",
                line_chart_svg(series, f"{tdir.name} {k}: topic share by slice"),
            )

    manifest = writer.finish()
    click.echo(json.dumps({"files": len(manifest.entries)}, sort_keys=True))


def main() -> None:
    try:
        cli(standalone_mode=True)
    except Exception as exc:  # noqa: BLE001 - boundary: map to exit 1 with a diagnostic
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_RUNTIME)


if __name__ == "__main__":
    main()
