from __future__ import annotations

import csv
import json

import pytest

from malfeed import ActivityClass, build_store, write_store_csv
from malfeed.cli import run

WEEK = 7 * 24 * 3600


def _run(*argv: str) -> int:
    return run(list(argv))


@pytest.fixture
def sim_csv(tmp_path) -> str:
    path = tmp_path / "sim.csv"
    code = _run("simulate", "--hosts", "20", "--mean-life", "2", "--mean-death", "3",
                "--horizon", "40", "--seed", "5", "--out", str(path))
    assert code == 0
    return str(path)


@pytest.fixture
def hand_csv(tmp_path, hand_store) -> str:
    path = tmp_path / "hand.csv"
    write_store_csv(hand_store, str(path))
    return str(path)


def test_unknown_subcommand_exits_2(capsys):
    assert _run("frobnicate") == 2
    assert _run() == 2


def test_missing_required_flag_exits_2():
    assert _run("churn") == 2


def test_data_error_exits_1(tmp_path, capsys):
    missing = str(tmp_path / "nope.csv")
    assert _run("churn", "--in", missing, "--out", "-") == 1
    assert "error" in capsys.readouterr().err


def test_strict_parse_failure_exits_1(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("timestamp,ip\n100,1.1.1.1\nbogus,2.2.2.2\n", encoding="utf-8")
    assert _run("ingest", "--in", str(bad), "--strict", "--out", "-") == 1
    err = capsys.readouterr().err
    assert "line 3" in err


def test_ingest_writes_canonical_csv(tmp_path, capsys):
    feed = tmp_path / "feed.csv"
    feed.write_text(
        "timestamp,ip,activity,source\n"
        "200,1.1.1.2,phishing,x\n"
        "100,1.1.1.1,malware,x\n"
        "100,1.1.1.1,malware,x\n", encoding="utf-8")
    out = tmp_path / "store.csv"
    assert _run("ingest", "--in", str(feed), "--out", str(out)) == 0
    rows = list(csv.reader(out.open()))
    assert rows[0][:2] == ["timestamp", "ip"]
    assert [r[0] for r in rows[1:]] == ["100", "200"]  # deduped and sorted
    assert "2 reports" in capsys.readouterr().err


def test_ingest_to_stdout(hand_csv, capsys):
    assert _run("ingest", "--in", hand_csv, "--out", "-") == 0
    out = capsys.readouterr().out
    assert out.startswith("timestamp,ip,")
    assert len(out.splitlines()) == 7


def test_enrich_cli(tmp_path, hand_csv):
    asn_map = tmp_path / "asn.csv"
    asn_map.write_text("snapshot_date,prefix,value\n0,10.0.0.0/16,100\n", encoding="utf-8")
    geo_map = tmp_path / "geo.csv"
    geo_map.write_text("0,10.0.0.0/8,US\n", encoding="utf-8")
    out = tmp_path / "enriched.csv"
    assert _run("enrich", "--in", hand_csv, "--asn-map", str(asn_map),
                "--geo-map", str(geo_map), "--out", str(out)) == 0
    store = build_store([str(out)])
    for r in store:
        assert r.country == "US"
    asns = {r.asn for r in store}
    assert asns == {100, None}  # 10.1.0.9 is outside the /16


def test_churn_cli_matches_library(tmp_path, sim_csv):
    out = tmp_path / "churn.csv"
    assert _run("churn", "--in", sim_csv, "--level", "ip", "--out", str(out)) == 0
    rows = list(csv.DictReader(out.open()))
    assert rows, "no churn rows emitted"

    from malfeed import Level, churn_summaries
    store = build_store([sim_csv])
    expected = churn_summaries(store, Level.IP)
    assert len(rows) == len(expected)
    by_key = {h.label(): s for h, s in expected.items()}
    for row in rows:
        s = by_key[row["key"]]
        assert float(row["mean_lifetime"]) == s.mean_lifetime
        assert float(row["severity"]) == s.severity
        assert int(row["n_cycles"]) == s.n_cycles
        if row["mean_deathtime"] == "":
            assert s.mean_deathtime is None
        else:
            assert float(row["mean_deathtime"]) == s.mean_deathtime


def test_churn_cli_class_filter(tmp_path, hand_csv):
    out = tmp_path / "churn.csv"
    assert _run("churn", "--in", hand_csv, "--class", "malware",
                "--out", str(out)) == 0
    rows = list(csv.DictReader(out.open()))
    assert {r["key"] for r in rows} == {"10.0.0.1", "10.1.0.9"}


def test_churn_top_k(tmp_path, sim_csv):
    out = tmp_path / "top.csv"
    assert _run("churn", "--in", sim_csv, "--top", "3", "--by", "severity",
                "--out", str(out)) == 0
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["rank", "key", "severity"]
    assert len(rows) == 4
    assert [r[0] for r in rows[1:]] == ["1", "2", "3"]


def test_rank_cli_volume(tmp_path, hand_csv):
    out = tmp_path / "rank.csv"
    assert _run("rank", "--in", hand_csv, "--by", "volume", "--top", "2",
                "--out", str(out)) == 0
    rows = list(csv.reader(out.open()))
    assert rows[1][1:] == ["10.0.0.1", "3.0"]
    assert rows[2][1:] == ["10.0.0.2", "2.0"]


def test_rank_cli_deathtime_ascending(tmp_path, sim_csv):
    out = tmp_path / "rank.csv"
    assert _run("rank", "--in", sim_csv, "--by", "deathtime", "--top", "5",
                "--out", str(out)) == 0
    rows = list(csv.DictReader(out.open()))
    values = [float(r["deathtime"]) for r in rows]
    assert values == sorted(values)


def test_entropy_cli_specialization(tmp_path, hand_csv):
    out = tmp_path / "spec.csv"
    assert _run("entropy", "--in", hand_csv, "--metric", "specialization",
                "--level", "ip", "--out", str(out)) == 0
    rows = {r["key"]: r for r in csv.DictReader(out.open())}
    assert set(rows) == {"10.0.0.1", "10.0.0.2", "10.1.0.9"}
    from malfeed import specialization
    assert float(rows["10.0.0.1"]["value"]) == specialization([2, 1])
    assert float(rows["10.0.0.2"]["value"]) == 0.0
    assert rows["10.0.0.1"]["k"] == "2"
    assert rows["10.0.0.1"]["total"] == "3"


def test_entropy_cli_affinity(tmp_path, hand_csv):
    out = tmp_path / "aff.csv"
    assert _run("entropy", "--in", hand_csv, "--metric", "affinity",
                "--level", "ip", "--out", str(out)) == 0
    rows = {r["key"]: r for r in csv.DictReader(out.open())}
    assert set(rows) == {"malware", "phishing"}
    from malfeed import affinity
    assert float(rows["malware"]["value"]) == affinity([2, 1])
    assert rows["malware"]["k"] == "2"


def test_entropy_cli_stability_with_class(tmp_path, hand_csv):
    out = tmp_path / "stab.csv"
    assert _run("entropy", "--in", hand_csv, "--metric", "stability",
                "--level", "ip", "--class", "phishing", "--out", str(out)) == 0
    rows = {r["key"]: r for r in csv.DictReader(out.open())}
    assert set(rows) == {"10.0.0.1", "10.0.0.2"}
    assert float(rows["10.0.0.2"]["value"]) == 1.0  # weeks 1 and 4, one each


def test_survival_cli(tmp_path, sim_csv):
    out = tmp_path / "km.csv"
    assert _run("survival", "--in", sim_csv, "--level", "ip",
                "--confidence", "0.95", "--out", str(out)) == 0
    rows = list(csv.DictReader(out.open()))
    assert rows
    last = 1.0
    for row in rows:
        s = float(row["survival"])
        assert s <= last + 1e-15
        assert float(row["ci_low"]) <= s <= float(row["ci_high"])
        last = s


def test_evolution_cli(tmp_path, hand_csv):
    out = tmp_path / "evo.csv"
    assert _run("evolution", "--in", hand_csv, "--granularity", "week",
                "--out", str(out)) == 0
    rows = list(csv.DictReader(out.open()))
    assert [r["bin"] for r in rows] == ["1", "2", "3", "4"]
    week1 = rows[0]
    assert week1["malware"] == "2" and week1["phishing"] == "1"
    assert float(week1["malware_proportion"]) == pytest.approx(2 / 3)
    assert week1["total"] == "3"


def test_label_train_predict_eval(tmp_path):
    rows = ["timestamp,ip,activity"]
    for i in range(40):
        rows.append(f"{1400000000 + i},{10 + i % 40}.1.2.3,malware")
        rows.append(f"{1400000000 + i},{200 + i % 40}.1.2.3,phishing")
    labeled = tmp_path / "labeled.csv"
    labeled.write_text("\n".join(rows) + "\n", encoding="utf-8")

    model = tmp_path / "model.json"
    assert _run("label", "train", "--in", str(labeled), "--members", "3",
                "--seed", "1", "--out", str(model)) == 0
    doc = json.loads(model.read_text())
    assert doc["format"] == "malfeed-ensemble"
    assert len(doc["members"]) == 3

    unlabeled = tmp_path / "unlabeled.csv"
    unlabeled.write_text("timestamp,ip\n1400000100,12.0.0.1\n1400000101,222.0.0.1\n",
                         encoding="utf-8")
    out = tmp_path / "predicted.csv"
    assert _run("label", "predict", "--model", str(model), "--in", str(unlabeled),
                "--out", str(out)) == 0
    rows = list(csv.DictReader(out.open()))
    assert rows[0]["predicted_class"] == "malware"
    assert rows[1]["predicted_class"] == "phishing"
    assert 0.0 <= float(rows[0]["confidence"]) <= 1.0

    eval_out = tmp_path / "eval.csv"
    assert _run("label", "eval", "--in", str(labeled), "--members", "3",
                "--seed", "1", "--train-fraction", "0.4", "--out", str(eval_out)) == 0
    eval_rows = list(csv.reader(eval_out.open()))
    assert eval_rows[0] == ["class", "count", "accuracy"]
    assert eval_rows[-1][0] == "weighted"
    assert float(eval_rows[-1][2]) >= 0.9


def test_simulate_truth_and_determinism(tmp_path):
    a, ta = tmp_path / "a.csv", tmp_path / "ta.csv"
    b, tb = tmp_path / "b.csv", tmp_path / "tb.csv"
    args = ["simulate", "--hosts", "10", "--mean-life", "2", "--mean-death", "2",
            "--horizon", "30", "--seed", "9"]
    assert _run(*args, "--out", str(a), "--truth", str(ta)) == 0
    assert _run(*args, "--out", str(b), "--truth", str(tb)) == 0
    assert a.read_bytes() == b.read_bytes()
    assert ta.read_bytes() == tb.read_bytes()
    assert ta.read_text().splitlines()[0] == "host,cycle,lifetime,reports,deathtime"


def test_simulate_class_mix_flag(tmp_path):
    out = tmp_path / "mix.csv"
    assert _run("simulate", "--hosts", "30", "--mean-life", "2", "--mean-death", "2",
                "--horizon", "20", "--seed", "3",
                "--class-mix", "malware=1.0", "--out", str(out)) == 0
    store = build_store([str(out)])
    assert {r.activity for r in store} == {ActivityClass.MALWARE}


def test_report_on_hand_corpus(tmp_path, hand_csv):
    out = tmp_path / "report.json"
    assert _run("report", "--in", hand_csv, "--out", str(out)) == 0
    doc = json.loads(out.read_text())
    assert doc["dataset"]["reports"] == 6
    assert doc["dataset"]["classes"]["malware"]["reports"] == 3
    assert doc["dataset"]["classes"]["phishing"]["reports"] == 3
    assert doc["dataset"]["classes"]["malware"]["unique_ips"] == 2
    assert doc["dataset"]["unlabeled_reports"] == 0
    assert doc["churn"]["ip"]["hosts"] == 3
    assert doc["survival"]["ip"]["hosts"] == 3
    assert doc["churn"]["cc"]["hosts"] == 0


def test_jsonl_input_via_format_flag(tmp_path):
    path = tmp_path / "feed.txt"  # suffix does not reveal the format
    path.write_text(
        '{"timestamp": 200, "ip": "1.1.1.2", "activity": "phishing"}\n'
        '{"timestamp": 100, "ip": "1.1.1.1", "activity": "malware"}\n',
        encoding="utf-8")
    out = tmp_path / "store.csv"
    assert _run("ingest", "--in", str(path), "--format", "jsonl",
                "--out", str(out)) == 0
    rows = list(csv.DictReader(out.open()))
    assert [r["timestamp"] for r in rows] == ["100", "200"]

    churn_out = tmp_path / "churn.csv"
    assert _run("churn", "--in", str(path), "--format", "jsonl",
                "--out", str(churn_out)) == 0
    assert len(list(csv.DictReader(churn_out.open()))) == 2


def test_threads_flag_does_not_change_output(tmp_path, hand_csv, sim_csv):
    out1 = tmp_path / "t1.csv"
    out8 = tmp_path / "t8.csv"
    for out, threads in ((out1, "1"), (out8, "8")):
        assert _run("ingest", "--in", hand_csv, sim_csv, "--threads", threads,
                    "--out", str(out)) == 0
    assert out1.read_bytes() == out8.read_bytes()
