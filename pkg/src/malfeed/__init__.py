"""malfeed: temporal analytics for timestamped mal-activity report feeds.

Ingest blacklist-style report files, enrich them with historical IP-to-ASN
and IP-to-country snapshots, and compute diversity entropies, alternating
renewal churn statistics, severity, Kaplan-Meier survival curves, rank
correlations and a soft-voting activity labeler, all validated against a
built-in synthetic-trace generator with known ground truth.
"""

from .churn import (Cycle, ChurnSummary, WeeklyTrace, WEEK_SECONDS,
                    build_trace, churn_by_class, churn_summaries,
                    extract_cycles, summarize, trace_from_cycles)
from .enrich import (HostKey, Level, SnapshotTable, aggregate, enrich_store,
                     load_snapshot_table, map_ip)
from .entropy import affinity, av_score, geo_density, normalized_entropy, \
    specialization, stability
from .ingest import (ActivityClass, FormatSpec, ParseError, Report,
                     ReportStore, build_store, dedupe, parse_report_line,
                     write_store_csv)
from .labeler import (DecisionTreeLearner, LabeledExample,
                      ReportFeatureEncoder, SoftVotingEnsemble, Vocabulary,
                      encode, load_model, per_class_accuracy, save_model,
                      soft_vote, stratified_split, weighted_accuracy)
from .simgen import SimParams, SimResult, simulate
from .stats import (Granularity, TimeSeries, ecdf, evolution,
                    fractional_ranks, rank_top_k, spearman,
                    volume_distribution)
from .survival import (DurationSample, KaplanMeierEstimator, SurvivalCurve,
                       durations_from_store, km_by_class, km_estimate)

__version__ = "0.1.0"

__all__ = [
    "ActivityClass", "ChurnSummary", "Cycle", "DecisionTreeLearner",
    "DurationSample", "FormatSpec", "Granularity", "HostKey",
    "KaplanMeierEstimator", "LabeledExample", "Level", "ParseError",
    "Report", "ReportFeatureEncoder", "ReportStore", "SimParams",
    "SimResult", "SnapshotTable", "SoftVotingEnsemble", "SurvivalCurve",
    "TimeSeries", "Vocabulary", "WEEK_SECONDS", "WeeklyTrace", "affinity",
    "aggregate", "av_score", "build_store", "build_trace", "churn_by_class",
    "churn_summaries", "dedupe", "durations_from_store", "ecdf", "encode",
    "enrich_store", "evolution", "extract_cycles", "fractional_ranks",
    "geo_density", "km_by_class", "km_estimate", "load_model",
    "load_snapshot_table", "map_ip", "normalized_entropy",
    "parse_report_line", "per_class_accuracy", "rank_top_k", "save_model",
    "simulate", "soft_vote", "spearman", "specialization", "stability",
    "stratified_split", "summarize", "trace_from_cycles",
    "volume_distribution", "weighted_accuracy", "write_store_csv",
]
