"""Command-line pipelines: subcommand dispatch and CSV/JSON report emission.

Analytic subcommands (churn, rank, survival, entropy, evolution) stream
their input and hold only per-host or per-bin aggregates resident, plus one
8-byte dedupe fingerprint per unique report.  Everything is byte-deterministic
given identical inputs, flags and seed; ``--threads`` only parallelizes
per-file parsing and never changes any output.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import os
import sys
from hashlib import blake2b
from typing import IO, Iterable, Iterator, Optional, Sequence

from . import churn as churn_mod
from . import entropy as entropy_mod
from . import stats as stats_mod
from . import survival as survival_mod
from .churn import WEEK_SECONDS
from .enrich import (HostKey, Level, SnapshotTable, enrich_store, host_key,
                     load_snapshot_table, mapped_groups)
from .ingest import (ActivityClass, CANONICAL_COLUMNS, ParseError, Report,
                     ReportStore, _check_columns, _gc_paused, build_store,
                     iter_report_file, parse_ipv4, parse_timestamp,
                     report_to_row, write_store_csv)

_ACTIVITY_BY_LABEL = {a.value: a for a in ActivityClass}


# ---------------------------------------------------------------------------
# Plumbing
# ---------------------------------------------------------------------------

@contextlib.contextmanager
def _open_out(path: str) -> Iterator[IO[str]]:
    if path == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def _writer(fh: IO[str]) -> "csv.writer":
    return csv.writer(fh, lineterminator="\n")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _threads(args: argparse.Namespace) -> int:
    n = getattr(args, "threads", None)
    if n is None:
        env = os.environ.get("MALFEED_THREADS")
        n = int(env) if env else (os.cpu_count() or 1)
    if n < 1:
        raise ValueError("--threads must be at least 1")
    return n


def _load_tables(args: argparse.Namespace) -> tuple[SnapshotTable | None, SnapshotTable | None]:
    asn_table = load_snapshot_table(args.asn_map, "asn") if args.asn_map else None
    geo_table = load_snapshot_table(args.geo_map, "cc") if args.geo_map else None
    return asn_table, geo_table


def _format_spec(args: argparse.Namespace):
    from .ingest import FormatSpec
    if getattr(args, "format", "auto") == "auto":
        return None
    return FormatSpec(kind=args.format)


def _build_store(args: argparse.Namespace) -> ReportStore:
    mode = "strict" if args.strict else "lenient"
    return build_store(args.inputs, _format_spec(args), mode=mode,
                       threads=_threads(args))


def _parse_activity(text: str | None) -> ActivityClass | None:
    return ActivityClass.from_label(text) if text else None


# ---------------------------------------------------------------------------
# Streaming row scan (the memory-bounded hot path)
# ---------------------------------------------------------------------------

class _SkipCounter:
    __slots__ = ("count",)

    def __init__(self) -> None:
        self.count = 0

    def __call__(self, _err: ParseError) -> None:
        self.count += 1


def _iter_rows(paths: Sequence[str], mode: str, skip: _SkipCounter,
               fmt: str = "auto"
               ) -> Iterator[tuple[int, int, Optional[str], Optional[ActivityClass],
                                   Optional[int], Optional[str], str]]:
    """Yield (ts, ip, url, activity, asn, country, source) with minimal parsing.

    CSV files take a lean inline loop that validates only consumed fields;
    JSON-lines files route through the full record parser.
    """
    strict = mode == "strict"
    for path in paths:
        if fmt == "jsonl" or (fmt == "auto"
                              and path.endswith((".jsonl", ".ndjson", ".json"))):
            from .ingest import FormatSpec
            for r in iter_report_file(path, FormatSpec(kind="jsonl"), mode=mode,
                                      on_skip=skip):
                yield (r.timestamp, r.ip, r.url, r.activity, r.asn, r.country, r.source)
            continue
        try:
            fh = open(path, "r", encoding="utf-8", newline="")
        except OSError as exc:
            raise ParseError(f"cannot read input: {exc}", path=path) from None
        with fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                continue
            try:
                pos = {name: i for i, name in enumerate(_check_columns(header))}
            except ParseError as exc:
                raise exc.with_context(path=path, line_no=1) from None
            i_ts = pos["timestamp"]
            i_ip = pos["ip"]
            i_url = pos.get("url")
            i_act = pos.get("activity")
            i_asn = pos.get("asn")
            i_cc = pos.get("country")
            i_src = pos.get("source")
            ncols = len(header)
            activity_of = _ACTIVITY_BY_LABEL
            for line_no, row in enumerate(reader, start=2):
                if not row:
                    continue
                try:
                    if len(row) != ncols:
                        raise ValueError(f"expected {ncols} fields, got {len(row)}")
                    raw_ts = row[i_ts]
                    try:
                        ts = int(raw_ts)
                        if ts <= 0:
                            raise ValueError("timestamp must be positive")
                    except ValueError:
                        ts = parse_timestamp(raw_ts)
                    ip = parse_ipv4(row[i_ip])
                    url = row[i_url] if i_url is not None else ""
                    activity = None
                    if i_act is not None:
                        raw_act = row[i_act].strip()
                        if raw_act:
                            activity = activity_of.get(raw_act.lower())
                            if activity is None:
                                raise ValueError(f"unknown activity label {raw_act!r}")
                    asn = None
                    if i_asn is not None:
                        raw_asn = row[i_asn].strip()
                        if raw_asn:
                            asn = int(raw_asn[2:] if raw_asn.upper().startswith("AS")
                                      else raw_asn)
                            if asn <= 0:
                                raise ValueError("AS number must be positive")
                    country = None
                    if i_cc is not None:
                        raw_cc = row[i_cc].strip()
                        if raw_cc:
                            country = raw_cc.upper()
                            if len(country) != 2 or not country.isalpha():
                                raise ValueError(
                                    f"not a 2-letter country code: {raw_cc!r}")
                    source = row[i_src].strip() if i_src is not None else ""
                except ValueError as exc:
                    err = ParseError(str(exc), path=path, line_no=line_no)
                    if strict:
                        raise err from None
                    skip(err)
                    continue
                yield (ts, ip, url or None, activity, asn, country, source)


def _dedupe_key(ts: int, ip: int, url: Optional[str]) -> int:
    # URL-less triples pack exactly; URL-bearing ones take a 64-bit digest
    # (kept negative so the two key spaces cannot collide).
    if url is None:
        return (ts << 32) | ip
    digest = blake2b(f"{ts}|{ip}|{url}".encode(), digest_size=8).digest()
    return -1 - int.from_bytes(digest, "big")


def _raw_host(level: Level, ip: int, ts: int, asn: Optional[int],
              country: Optional[str], asn_table: SnapshotTable | None,
              geo_table: SnapshotTable | None):
    if level is Level.IP:
        return ip
    if level is Level.ASN:
        if asn is not None:
            return asn
        return asn_table.lookup(ip, ts) if asn_table is not None else None
    if country is not None:
        return country
    return geo_table.lookup(ip, ts) if geo_table is not None else None


def _stream_weekly_counts(args: argparse.Namespace, level: Level,
                          activity: ActivityClass | None
                          ) -> tuple[dict[HostKey, dict[int, int]], int]:
    """One streaming pass: dedupe, map to hosts, count reports per week."""
    asn_table, geo_table = _load_tables(args)
    skip = _SkipCounter()
    mode = "strict" if args.strict else "lenient"
    counts: dict[object, dict[int, int]] = {}
    seen: set[int] = set()
    with _gc_paused():
        for ts, ip, url, act, asn, country, _src in _iter_rows(
                args.inputs, mode, skip, args.format):
            key = _dedupe_key(ts, ip, url)
            if key in seen:
                continue
            seen.add(key)
            if activity is not None and act is not activity:
                continue
            raw = _raw_host(level, ip, ts, asn, country, asn_table, geo_table)
            if raw is None:
                continue
            week = ts // WEEK_SECONDS
            host_weeks = counts.get(raw)
            if host_weeks is None:
                counts[raw] = host_weeks = {}
            host_weeks[week] = host_weeks.get(week, 0) + 1
    return ({host_key(level, raw): weeks for raw, weeks in counts.items()},
            skip.count)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _cmd_ingest(args: argparse.Namespace) -> int:
    store = _build_store(args)
    with _open_out(args.out) as fh:
        write_store_csv(store, fh)
    print(f"malfeed ingest: {len(store)} reports"
          + (f", {store.skipped_rows} rows skipped" if store.skipped_rows else ""),
          file=sys.stderr)
    return 0


def _cmd_enrich(args: argparse.Namespace) -> int:
    asn_table, geo_table = _load_tables(args)
    store = enrich_store(_build_store(args), asn_table, geo_table)
    with _open_out(args.out) as fh:
        write_store_csv(store, fh)
    return 0


def _cmd_entropy(args: argparse.Namespace) -> int:
    level = Level.parse(args.level)
    activity = _parse_activity(args.activity)
    asn_table, geo_table = _load_tables(args)
    skip = _SkipCounter()
    mode = "strict" if args.strict else "lenient"

    class_index = {a: i for i, a in enumerate(ActivityClass)}
    per_host_class: dict[object, list[int]] = {}
    per_host_week: dict[object, dict[int, int]] = {}
    seen: set[int] = set()
    for ts, ip, url, act, asn, country, _src in _iter_rows(args.inputs, mode, skip, args.format):
        key = _dedupe_key(ts, ip, url)
        if key in seen:
            continue
        seen.add(key)
        raw = _raw_host(level, ip, ts, asn, country, asn_table, geo_table)
        if raw is None:
            continue
        if act is not None:
            hist = per_host_class.get(raw)
            if hist is None:
                per_host_class[raw] = hist = [0] * len(class_index)
            hist[class_index[act]] += 1
        if activity is None or act is activity:
            weeks = per_host_week.get(raw)
            if weeks is None:
                per_host_week[raw] = weeks = {}
            week = ts // WEEK_SECONDS
            weeks[week] = weeks.get(week, 0) + 1

    rows: list[tuple[str, float, int, int]] = []
    if args.metric == "specialization":
        for raw, hist in per_host_class.items():
            if activity is not None and hist[class_index[activity]] == 0:
                continue
            total = sum(hist)
            if total == 0:
                continue
            rows.append((host_key(level, raw).label(),
                         entropy_mod.specialization(hist),
                         sum(1 for c in hist if c > 0), total))
    elif args.metric == "affinity":
        wanted = [activity] if activity is not None else list(ActivityClass)
        for a in wanted:
            idx = class_index[a]
            host_counts = [hist[idx] for hist in per_host_class.values() if hist[idx] > 0]
            if not host_counts:
                continue
            rows.append((a.value, entropy_mod.affinity(host_counts),
                         len(host_counts), sum(host_counts)))
    else:  # stability
        for raw, weeks in per_host_week.items():
            if not weeks:
                continue
            values = list(weeks.values())
            rows.append((host_key(level, raw).label(),
                         entropy_mod.stability(values),
                         len(values), sum(values)))

    rows.sort(key=lambda r: r[0])
    with _open_out(args.out) as fh:
        w = _writer(fh)
        w.writerow(("key", "value", "k", "total"))
        for key, value, k, total in rows:
            w.writerow((key, _fmt(value), k, total))
    return 0


_CHURN_METRICS = {
    "lifetime": lambda s: s.mean_lifetime,
    "deathtime": lambda s: s.mean_deathtime,
    "roa": lambda s: s.rate_of_arrival,
    "severity": lambda s: s.severity,
}


def _cmd_churn(args: argparse.Namespace) -> int:
    level = Level.parse(args.level)
    activity = _parse_activity(args.activity)
    counts, _skipped = _stream_weekly_counts(args, level, activity)
    summaries = churn_mod.summaries_from_weekly_counts(counts)

    with _open_out(args.out) as fh:
        w = _writer(fh)
        if args.top is not None:
            metric = _CHURN_METRICS[args.by]
            table = {host: metric(s) for host, s in summaries.items()}
            w.writerow(("rank", "key", args.by))
            ranked = stats_mod.rank_top_k(table, args.by, args.top)
            for rank, (host, value) in enumerate(ranked, start=1):
                w.writerow((rank, host.label(), _fmt(value)))
        else:
            w.writerow(("key", "mean_lifetime", "mean_deathtime",
                        "rate_of_arrival", "severity", "n_cycles"))
            for host in sorted(summaries, key=lambda h: h.label()):
                s = summaries[host]
                w.writerow((host.label(), _fmt(s.mean_lifetime),
                            _fmt(s.mean_deathtime), _fmt(s.rate_of_arrival),
                            _fmt(s.severity), s.n_cycles))
    return 0


def _cmd_survival(args: argparse.Namespace) -> int:
    level = Level.parse(args.level)
    activity = _parse_activity(args.activity)
    asn_table, geo_table = _load_tables(args)
    skip = _SkipCounter()
    mode = "strict" if args.strict else "lenient"

    # streaming aggregates: per-host first/last week and sources, per-source window
    span: dict[object, list] = {}
    source_last: dict[str, int] = {}
    for ts, ip, url, act, asn, country, src in _iter_rows(args.inputs, mode, skip, args.format):
        prev = source_last.get(src)
        if prev is None or ts > prev:
            source_last[src] = ts
        if activity is not None and act is not activity:
            continue
        raw = _raw_host(level, ip, ts, asn, country, asn_table, geo_table)
        if raw is None:
            continue
        week = ts // WEEK_SECONDS
        entry = span.get(raw)
        if entry is None:
            span[raw] = [week, week, {src}]
        else:
            if week < entry[0]:
                entry[0] = week
            if week > entry[1]:
                entry[1] = week
            entry[2].add(src)

    final_week = {s: ts // WEEK_SECONDS for s, ts in source_last.items()}
    samples = []
    for raw in span:
        first, last, sources = span[raw]
        censored = all(last == final_week[s] for s in sources)
        samples.append(survival_mod.DurationSample(last - first, censored))
    if not samples:
        raise ValueError("no hosts to estimate survival from")
    curve = survival_mod.km_estimate(samples, confidence=args.confidence)

    with _open_out(args.out) as fh:
        w = _writer(fh)
        w.writerow(("t", "survival", "ci_low", "ci_high", "at_risk", "deaths"))
        for step in curve.steps:
            w.writerow((step.t, _fmt(step.survival), _fmt(step.ci_low),
                        _fmt(step.ci_high), step.at_risk, step.deaths))
    return 0


def _cmd_evolution(args: argparse.Namespace) -> int:
    granularity = stats_mod.Granularity.parse(args.granularity)
    skip = _SkipCounter()
    mode = "strict" if args.strict else "lenient"
    counts: dict[int, list[int]] = {}
    unlabeled: dict[int, int] = {}
    seen: set[int] = set()
    class_index = {a: i for i, a in enumerate(ActivityClass)}
    for ts, ip, url, act, _asn, _cc, _src in _iter_rows(args.inputs, mode, skip, args.format):
        key = _dedupe_key(ts, ip, url)
        if key in seen:
            continue
        seen.add(key)
        b = stats_mod.bin_index(ts, granularity)
        if b not in counts:
            counts[b] = [0] * len(class_index)
            unlabeled[b] = 0
        if act is None:
            unlabeled[b] += 1
        else:
            counts[b][class_index[act]] += 1

    labels = [a.value for a in ActivityClass]
    with _open_out(args.out) as fh:
        w = _writer(fh)
        w.writerow(["bin", "start", *labels, "unlabeled", "total",
                    *[f"{name}_proportion" for name in labels]])
        for b in sorted(counts):
            per_class = counts[b]
            labeled_total = sum(per_class)
            props = ([c / labeled_total for c in per_class]
                     if labeled_total else [0.0] * len(per_class))
            w.writerow([b, stats_mod.bin_start(b, granularity), *per_class,
                        unlabeled[b], labeled_total + unlabeled[b],
                        *[_fmt(p) for p in props]])
    return 0


def _cmd_rank(args: argparse.Namespace) -> int:
    level = Level.parse(args.level)
    activity = _parse_activity(args.activity)
    counts, _skipped = _stream_weekly_counts(args, level, activity)
    if args.by == "volume":
        table = {host: float(sum(weeks.values())) for host, weeks in counts.items()}
    else:
        metric = _CHURN_METRICS[args.by]
        summaries = churn_mod.summaries_from_weekly_counts(counts)
        table = {host: metric(s) for host, s in summaries.items()}
    ranked = stats_mod.rank_top_k(table, args.by, args.top)
    with _open_out(args.out) as fh:
        w = _writer(fh)
        w.writerow(("rank", "key", args.by))
        for rank, (host, value) in enumerate(ranked, start=1):
            w.writerow((rank, host.label(), _fmt(value)))
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    from . import simgen

    mix = None
    if args.class_mix:
        mix = {}
        for part in args.class_mix.split(","):
            name, _, weight = part.partition("=")
            mix[ActivityClass.from_label(name)] = float(weight)
    params = simgen.SimParams(
        n_hosts=args.hosts,
        mean_lifetime=args.mean_life,
        mean_deathtime=args.mean_death,
        reports_per_active_week=args.rate,
        horizon=args.horizon,
        class_mix=mix,
        seed=args.seed,
    )
    with contextlib.ExitStack() as stack:
        out = stack.enter_context(_open_out(args.out))
        truth_out = stack.enter_context(_open_out(args.truth)) if args.truth else None
        n = simgen.write_sim_csv(params, out, truth_out)
    print(f"malfeed simulate: {n} reports for {args.hosts} hosts", file=sys.stderr)
    return 0


def _cmd_label_train(args: argparse.Namespace) -> int:
    from . import labeler

    store = _build_store(args)
    labeled = [r for r in store if r.activity is not None]
    if not labeled:
        raise ValueError("no labeled reports to train on")
    encoder = labeler.ReportFeatureEncoder().fit(labeled)
    X = encoder.transform(labeled)
    y = [r.activity for r in labeled]
    ensemble = labeler.SoftVotingEnsemble(n_members=args.members,
                                          random_state=args.seed).fit(X, y)
    with _open_out(args.out) as fh:
        labeler.save_model(fh, ensemble, encoder)
    dropped = len(store) - len(labeled)
    print(f"malfeed label train: {len(labeled)} examples, {args.members} members"
          + (f", {dropped} unlabeled rows ignored" if dropped else ""),
          file=sys.stderr)
    return 0


def _cmd_label_predict(args: argparse.Namespace) -> int:
    from . import labeler

    ensemble, encoder = labeler.load_model(args.model)
    store = _build_store(args)
    with _open_out(args.out) as fh:
        w = _writer(fh)
        w.writerow([*CANONICAL_COLUMNS, "predicted_class", "confidence"])
        for r in store:
            label, confidence = labeler.soft_vote(
                ensemble, labeler.encode(r, encoder.vocabulary_))
            w.writerow([*report_to_row(r), label.value, _fmt(confidence)])
    return 0


def _cmd_label_eval(args: argparse.Namespace) -> int:
    from . import labeler

    store = _build_store(args)
    labeled = [r for r in store if r.activity is not None]
    if not labeled:
        raise ValueError("no labeled reports to evaluate on")
    train, test = labeler.stratified_split(
        labeled, args.train_fraction, args.seed,
        labels=[r.activity for r in labeled])
    if not train or not test:
        raise ValueError("train/test split left one side empty; adjust --train-fraction")
    encoder = labeler.ReportFeatureEncoder().fit(train)
    ensemble = labeler.SoftVotingEnsemble(
        n_members=args.members, random_state=args.seed).fit(
            encoder.transform(train), [r.activity for r in train])
    predictions = ensemble.predict(encoder.transform(test))
    truth = [r.activity for r in test]
    accuracies = labeler.per_class_accuracy(truth, predictions)
    class_counts = {a: truth.count(a) for a in accuracies}
    weighted = labeler.weighted_accuracy(accuracies, class_counts)
    with _open_out(args.out) as fh:
        w = _writer(fh)
        w.writerow(("class", "count", "accuracy"))
        for a in sorted(accuracies, key=lambda a: a.value):
            w.writerow((a.value, class_counts[a], _fmt(accuracies[a])))
        w.writerow(("weighted", sum(class_counts.values()), _fmt(weighted)))
    return 0


def _cmd_label(args: argparse.Namespace) -> int:
    return args.label_func(args)


def _median_survival(curve) -> float | None:
    for step in curve.steps:
        if step.survival <= 0.5:
            return float(step.t)
    return None


def _cmd_report(args: argparse.Namespace) -> int:
    asn_table, geo_table = _load_tables(args)
    store = _build_store(args)
    if asn_table is not None or geo_table is not None:
        store = enrich_store(store, asn_table, geo_table)

    def uniques(reports: Iterable[Report]) -> dict[str, int]:
        ips, asns, ccs = set(), set(), set()
        for r in reports:
            ips.add(r.ip)
            if r.asn is not None:
                asns.add(r.asn)
            if r.country is not None:
                ccs.add(r.country)
        return {"unique_ips": len(ips), "unique_asns": len(asns),
                "unique_ccs": len(ccs)}

    classes = {}
    for a in ActivityClass:
        reports = [r for r in store if r.activity is a]
        classes[a.value] = {"reports": len(reports), **uniques(reports)}
    unlabeled = sum(1 for r in store if r.activity is None)

    summary: dict = {
        "dataset": {
            "reports": len(store),
            "skipped_rows": store.skipped_rows,
            "t_min": store.t_min,
            "t_max": store.t_max,
            **uniques(store),
            "classes": classes,
            "unlabeled_reports": unlabeled,
        },
        "churn": {},
        "correlation": {},
        "survival": {},
    }

    for level in Level:
        summaries = churn_mod.churn_summaries(store, level)
        block: dict = {"hosts": len(summaries)}
        for metric_name, metric in _CHURN_METRICS.items():
            table = {h: metric(s) for h, s in summaries.items()}
            block[f"top_{metric_name}"] = [
                [host.label(), value]
                for host, value in stats_mod.rank_top_k(table, metric_name, args.top)]
        summary["churn"][level.value] = block

        correlations: dict[str, float | None] = {}
        for metric_name, attr in (("lifetime", "mean_lifetime"),
                                  ("deathtime", "mean_deathtime")):
            pairs = [(s.severity, getattr(s, attr)) for s in summaries.values()
                     if getattr(s, attr) is not None]
            try:
                rho = stats_mod.spearman([p[0] for p in pairs], [p[1] for p in pairs])
            except ValueError:
                rho = None
            correlations[f"severity_vs_{metric_name}"] = rho
        summary["correlation"][level.value] = correlations

        if summaries:
            samples = survival_mod.durations_from_store(store, level)
            curve = survival_mod.km_estimate(samples, confidence=args.confidence)
            summary["survival"][level.value] = {
                "hosts": curve.n_samples,
                "median_survival_weeks": _median_survival(curve),
                "final_survival": curve.steps[-1].survival,
                "steps": len(curve.steps),
            }
        else:
            summary["survival"][level.value] = {"hosts": 0}

    with _open_out(args.out) as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser, *, inputs: bool = True) -> None:
    if inputs:
        p.add_argument("--in", dest="inputs", nargs="+", required=True,
                       metavar="PATH", help="input report file(s)")
        p.add_argument("--format", dest="format", choices=("auto", "csv", "jsonl"),
                       default="auto",
                       help="input format for every path (default: by suffix)")
        p.add_argument("--strict", action="store_true",
                       help="abort on the first malformed row (default: skip and count)")
    p.add_argument("--threads", type=int, default=None,
                   help="parallelism for per-file parsing "
                        "(default: MALFEED_THREADS or machine parallelism)")
    p.add_argument("--out", default="-", metavar="PATH",
                   help="output path, '-' for stdout (default)")


def _add_maps(p: argparse.ArgumentParser) -> None:
    p.add_argument("--asn-map", metavar="PATH",
                   help="snapshot_date,prefix,value CSV mapping prefixes to ASNs")
    p.add_argument("--geo-map", metavar="PATH",
                   help="snapshot_date,prefix,value CSV mapping prefixes to countries")


def _add_level(p: argparse.ArgumentParser) -> None:
    p.add_argument("--level", choices=("ip", "asn", "cc"), default="ip")
    p.add_argument("--class", dest="activity", default=None, metavar="CLASS",
                   help="restrict to one activity class")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="malfeed",
        description="Temporal analytics over timestamped mal-activity reports.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse, dedupe and sort feeds into canonical CSV")
    _add_common(p)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("enrich", help="fill asn/country from snapshot tables")
    _add_common(p)
    _add_maps(p)
    p.set_defaults(func=_cmd_enrich)

    p = sub.add_parser("entropy", help="specialization / affinity / stability metrics")
    _add_common(p)
    _add_maps(p)
    _add_level(p)
    p.add_argument("--metric", choices=("specialization", "affinity", "stability"),
                   required=True)
    p.set_defaults(func=_cmd_entropy)

    p = sub.add_parser("churn", help="per-host lifetime/deathtime/arrival/severity")
    _add_common(p)
    _add_maps(p)
    _add_level(p)
    p.add_argument("--top", type=int, default=None, metavar="K",
                   help="emit only the top K hosts by --by")
    p.add_argument("--by", choices=tuple(_CHURN_METRICS), default="lifetime")
    p.set_defaults(func=_cmd_churn)

    p = sub.add_parser("survival", help="Kaplan-Meier host survival curve")
    _add_common(p)
    _add_maps(p)
    _add_level(p)
    p.add_argument("--confidence", type=float, default=0.95)
    p.set_defaults(func=_cmd_survival)

    p = sub.add_parser("evolution", help="per-class report volume over time")
    _add_common(p)
    p.add_argument("--granularity", choices=("day", "week", "month"), default="week")
    p.set_defaults(func=_cmd_evolution)

    p = sub.add_parser("rank", help="top-K hosts by churn metric or volume")
    _add_common(p)
    _add_maps(p)
    _add_level(p)
    p.add_argument("--by", choices=(*_CHURN_METRICS, "volume"), required=True)
    p.add_argument("--top", type=int, default=5, metavar="K")
    p.set_defaults(func=_cmd_rank)

    p = sub.add_parser("label", help="train / predict / evaluate the activity labeler")
    label_sub = p.add_subparsers(dest="label_command", required=True)

    q = label_sub.add_parser("train", help="train an ensemble on labeled reports")
    _add_common(q)
    q.add_argument("--members", type=int, default=5)
    q.add_argument("--seed", type=int, default=0)
    q.set_defaults(func=_cmd_label, label_func=_cmd_label_train)

    q = label_sub.add_parser("predict", help="label reports with a trained model")
    _add_common(q)
    q.add_argument("--model", required=True, metavar="PATH")
    q.set_defaults(func=_cmd_label, label_func=_cmd_label_predict)

    q = label_sub.add_parser("eval", help="stratified split, train, score")
    _add_common(q)
    q.add_argument("--members", type=int, default=5)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--train-fraction", type=float, default=0.4)
    q.set_defaults(func=_cmd_label, label_func=_cmd_label_eval)

    p = sub.add_parser("simulate", help="generate a synthetic corpus with known churn")
    _add_common(p, inputs=False)
    p.add_argument("--hosts", type=int, required=True)
    p.add_argument("--mean-life", type=float, required=True)
    p.add_argument("--mean-death", type=float, required=True)
    p.add_argument("--rate", type=float, default=1.0,
                   help="mean reports per active week (>= 1)")
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--class-mix", default=None, metavar="SPEC",
                   help="comma list like malware=0.5,phishing=0.5 (default uniform)")
    p.add_argument("--truth", default=None, metavar="PATH",
                   help="also write the ground-truth cycle log")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("report", help="full pipeline: one JSON summary document")
    _add_common(p)
    _add_maps(p)
    p.add_argument("--top", type=int, default=5)
    p.add_argument("--confidence", type=float, default=0.95)
    p.set_defaults(func=_cmd_report)

    return parser


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.func(args)
    except (ParseError, OSError, ValueError) as exc:
        print(f"malfeed: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
