import csv
import io
import json
import shutil
from datetime import date

import numpy as np
import pytest

from citysent.cli import (EVENT_REPORT_HEADER, describe_event, emit_event_report,
                          export_city_timeline, main)
from citysent.deviation import DeviationScore, merge_events
from citysent.model import FactorSpec, FittedModel

from conftest import FIXTURE_DIR, make_bin, make_registry


@pytest.fixture
def workdir(tmp_path):
    """A private copy of the shipped fixture."""
    d = tmp_path / "fx"
    shutil.copytree(FIXTURE_DIR, d)
    return d


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def run(workdir, *args):
    return main([args[0], "--config", str(workdir / "config.json"), *args[1:]])


def test_all_on_fixture(workdir, capsys):
    assert run(workdir, "all") == 0
    out = workdir / "out"
    for name in ("bins.csv", "deviations.csv", "events.csv", "event_report.csv",
                 "model_table.csv", "timeline_chicago.csv", "bias_report.csv",
                 "detection_report.csv", "ranked_negative.csv"):
        assert len(rows(out / name)) > 1, name
    for pol in ("positive", "negative"):
        assert json.loads((out / f"model_{pol}.json").read_text())["n_obs"] > 0
    report = rows(out / "detection_report.csv")
    assert report[1][:5] == ["chicago_bad_day", "chicago", "negative", "surplus", "true"]
    assert report[1][5] == "1"
    manifest = json.loads((out / "run_manifest.json").read_text())
    assert manifest["commands"] == ["ingest", "fit", "detect", "report", "eval"]
    assert "tweets.ndjson.gz" in manifest["inputs"]
    ingest = (out / "ingest_report.txt").read_text()
    assert "unresolved_location: " in ingest


def test_gazetteer_location_is_resolved(workdir):
    assert run(workdir, "ingest") == 0
    ingest = dict(line.split(": ") for line in (workdir / "out/ingest_report.txt").read_text().splitlines())
    # only the deliberately unresolvable noise records stay unlocated
    noise = json.loads((workdir / "manifest.json").read_text())["records"]["noise"]
    assert int(ingest["unresolved_location"]) == noise["unresolved"]
    assert int(ingest["unmatched_gazetteer"]) == 0


def test_fit_is_byte_identical(workdir):
    assert run(workdir, "ingest") == 0
    assert run(workdir, "fit") == 0
    first = (workdir / "out/model_negative.json").read_bytes()
    assert run(workdir, "fit") == 0
    assert (workdir / "out/model_negative.json").read_bytes() == first


def test_detect_without_model(workdir, capsys):
    assert run(workdir, "ingest") == 0
    assert run(workdir, "detect") == 2
    assert "model_positive.json" in capsys.readouterr().err


def test_missing_input(workdir, capsys):
    assert run(workdir, "ingest", "--input", str(workdir / "nope.ndjson")) == 2
    assert "nope.ndjson" in capsys.readouterr().err


def test_bad_config_field_named(workdir, capsys):
    cfg = json.loads((workdir / "config.json").read_text())
    cfg["alpha"] = 2
    (workdir / "config.json").write_text(json.dumps(cfg))
    assert run(workdir, "fit") == 2
    assert "alpha" in capsys.readouterr().err


def test_overlapping_windows_rejected(workdir, capsys):
    cfg = json.loads((workdir / "config.json").read_text())
    cfg["test_window"] = ["2017-10-08", "2017-10-10"]
    (workdir / "config.json").write_text(json.dumps(cfg))
    assert run(workdir, "ingest") == 2
    assert "overlap" in capsys.readouterr().err


def test_unknown_timeline_city(workdir, capsys):
    cfg = json.loads((workdir / "config.json").read_text())
    cfg["timeline_cities"] = ["atlantis"]
    (workdir / "config.json").write_text(json.dumps(cfg))
    assert run(workdir, "all") == 2
    assert "atlantis" in capsys.readouterr().err


def test_flag_overrides(workdir, tmp_path):
    other = tmp_path / "elsewhere"
    assert run(workdir, "ingest", "--out-dir", str(other)) == 0
    assert (other / "bins.csv").exists() and not (workdir / "out").exists()
    assert run(workdir, "all", "--out-dir", str(other), "--top-k", "1") == 0
    report = rows(other / "detection_report.csv")
    assert report[1][6] == "1"


def test_synth_command_feeds_pipeline(workdir, tmp_path):
    assert run(workdir, "synth", "--seed", "99") == 0
    synth = workdir / "out" / "synth"
    manifest = json.loads((synth / "manifest.json").read_text())
    assert manifest["config"]["seed"] == 99
    cfg = json.loads((workdir / "config.json").read_text())
    cfg.update(registry="out/synth/registry.csv", input="out/synth/tweets.ndjson",
               weather="out/synth/weather.csv", manifest="out/synth/manifest.json", out_dir="run2")
    cfg.pop("gazetteer")
    (workdir / "c2.json").write_text(json.dumps(cfg))
    assert main(["all", "--config", str(workdir / "c2.json")]) == 0
    assert rows(workdir / "run2/detection_report.csv")[1][4] == "true"


def test_no_temp_files_left(workdir):
    assert run(workdir, "all") == 0
    assert not [p for p in (workdir / "out").rglob(".*.tmp")]


def score(city, d, hour, pol, o, e, n, stat=20.0, direction="surplus"):
    return DeviationScore(city, d, hour, pol, o, e, stat, 1e-5, direction, True, n)


def test_event_report_formatting():
    reg = make_registry(("nyc", "US"), ("la", "US"))
    d = date(2017, 10, 2)
    neg = [score("nyc", d, 10, "negative", 496, 287.0, 1000)]
    pos = [score("nyc", d, 10, "positive", 313, 381.0, 1000, direction="deficit")]
    events = merge_events(neg, reg, 60)
    buf = io.StringIO()
    emit_event_report(events, 60, buf, neg + pos, reg)
    header, row = list(csv.reader(io.StringIO(buf.getvalue())))
    assert header == EVENT_REPORT_HEADER
    assert row[0] == "1" and row[1] == "2 October 2017 in Nyc"
    assert row[4] == "49.6% (28.7%)" and row[5] == "31.3% (38.1%)"
    assert row[6] == ">60 days"


def test_event_report_empty():
    buf = io.StringIO()
    emit_event_report([], 60, buf)
    assert buf.getvalue().splitlines() == [",".join(EVENT_REPORT_HEADER)]


def test_event_descriptions():
    reg = make_registry(("nyc", "US"), ("la", "US"), ("manila", "PH"))
    d = date(2017, 11, 25)
    (hour_ev,) = merge_events([score("nyc", d, 10, "negative", 1, 1, 1),
                               score("la", d, 10, "negative", 1, 1, 1)], reg)
    assert describe_event(hour_ev, reg) == "10 am, 25 November 2017 in multiple US cities"
    (multi,) = merge_events([score("manila", date(2017, 11, k), 9, "negative", 1, 1, 1)
                             for k in (25, 26, 27)], reg)
    assert describe_event(multi, reg) == "25-27 November 2017 in Manila"


def null_model(p, outcome):
    return FittedModel(FactorSpec(), outcome, ["intercept"], np.array([p]), np.array([0.0]),
                       0.0, 0.0, 100, {})


def test_timeline_values():
    b = make_bin("nyc", n=100, neg=50, pos=40)
    models = {"negative": null_model(0.287, "negative"), "positive": null_model(0.4, "positive")}
    buf = io.StringIO()
    assert export_city_timeline("nyc", [b], models, [], buf) == 1
    header, row = list(csv.reader(io.StringIO(buf.getvalue())))
    rec = dict(zip(header, row))
    assert rec["expected_neg"] == "28.7" and rec["observed_neg"] == "50"
    assert rec["expected_pos"] == "40" and rec["observed_pos"] == "40"


def test_timeline_all_zero_when_on_baseline():
    from citysent.deviation import score_bins
    bins = [make_bin("nyc", hour=h, n=100, neg=30, pos=40) for h in range(3)]
    models = {"negative": null_model(0.3, "negative"), "positive": null_model(0.4, "positive")}
    scores = score_bins(bins, models["negative"]) + score_bins(bins, models["positive"])
    buf = io.StringIO()
    export_city_timeline("nyc", bins, models, scores, buf)
    recs = list(csv.DictReader(io.StringIO(buf.getvalue())))
    assert len(recs) == 3
    assert all(r["statistic_neg"] == "0" and r["statistic_pos"] == "0" for r in recs)
