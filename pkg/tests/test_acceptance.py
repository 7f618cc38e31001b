"""Acceptance checks, one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines inline; they
are also repeated in the terminal summary.
"""
import filecmp
import json
import time
from datetime import date, datetime

import numpy as np
import pytest
from scipy import stats

from citysent.aggregate import WEATHER_LEVELS, CityHourBin, WeatherCategory, write_weather_table
from citysent.cli import main
from citysent.deviation import (DeviationScore, chi2_sf, format_recurrence, merge_events,
                                recurrence_interval, score_bins)
from citysent.geo import write_city_registry
from citysent.model import (OUTCOMES, PAPER_MODELS, FactorSpec, build_design_matrix,
                            evaluate_correlation, fit_model)
from citysent.pipeline import (BIAS_MODELS, Window, compare_models, detect_events, fit_outcomes,
                               split_bins)
from citysent.sentiment import default_lexicon
from citysent.synth import (FactorEffects, GeneratorConfig, InjectedEvent, SynthCity,
                            evaluate_detection, generate_bins, generate_corpus, true_coefficients)

from conftest import FIXTURE_DIR, make_registry
from test_model import exact_r_sample

pytestmark = pytest.mark.slow


def test_design_matrix_structure(criterion):
    t0 = time.perf_counter()
    bins = [CityHourBin(f"c{i % 100:03d}", date(2017, 10, 2), i % 24, i % 7, 50, 20, 10, i % 13,
                        WeatherCategory(WEATHER_LEVELS[i % 7])) for i in range(336)]
    want = [136, 130, 101, 30, 100, 24, 7, 7, 2]
    got = [build_design_matrix(bins, spec).X.shape[1] for _, spec in PAPER_MODELS]
    elapsed = time.perf_counter() - t0
    criterion(1, "design-matrix column counts", got == want and elapsed < 1.0,
              f"counts {got}, {elapsed:.2f}s")


def recovery_config(seed=11):
    rng = np.random.default_rng(99)
    tzs = ["America/New_York", "America/Los_Angeles", "Europe/London", "Asia/Kolkata", "Australia/Sydney"]
    cities = [SynthCity(f"c{i:02d}", ["US", "GB", "IN", "AU", "CA"][i % 5], tzs[i % 5],
                        0.35 + 0.1 * rng.random(), 0.22 + 0.1 * rng.random(), tweets_per_hour=20)
              for i in range(50)]
    wave = np.arange(24) / 24 * 2 * np.pi
    positive = FactorEffects(list(0.03 * np.sin(wave)), [0, 0.005, 0.0, -0.005, 0.01, 0.015, 0.01],
                             {"clouds": -0.005, "rain": -0.01, "fog": -0.01, "snow": 0.01, "storm": -0.02},
                             0.1)
    negative = FactorEffects(list(0.02 * np.cos(wave)), [0.01, 0, 0, 0, -0.01, -0.005, 0],
                             {"clouds": 0.003, "rain": 0.01, "fog": 0.005, "haze": 0.002,
                              "snow": -0.01, "storm": 0.02}, -0.05)
    return GeneratorConfig(seed=seed, cities=cities, start=date(2017, 7, 1), end=date(2017, 9, 30),
                           positive=positive, negative=negative)


def test_coefficient_recovery(criterion):
    t0 = time.perf_counter()
    cfg = recovery_config()
    bins, _, _ = generate_bins(cfg)
    within, total, nested_ok = 0, 0, True
    for outcome in OUTCOMES:
        m = fit_model(bins, FactorSpec.full(), outcome)
        z = (m.beta - true_coefficients(cfg, m)) / m.stderr
        within += int(np.sum(np.abs(z) <= 3))
        total += len(z)
        for _, spec in PAPER_MODELS[1:]:
            nested_ok &= fit_model(bins, spec, outcome).r_squared <= m.r_squared
    share = within / total
    elapsed = time.perf_counter() - t0
    criterion(2, "coefficient recovery and nested r2",
              len(bins) >= 10**5 and share >= 0.95 and nested_ok and elapsed < 120,
              f"{len(bins)} bins, {share:.1%} of {total} within 3 SE, nested ok={nested_ok}, {elapsed:.0f}s")


def test_statistical_oracles(criterion):
    p1, p2 = chi2_sf(3.841), chi2_sf(6.635)
    c = evaluate_correlation(*exact_r_sample(0.306, 144000))
    ok = (abs(p1 - 0.05) <= 5e-4 and abs(p2 - 0.01) <= 5e-4
          and abs(c.ci_low - 0.3014) <= 5e-4 and abs(c.ci_high - 0.3106) <= 5e-4)
    criterion(3, "chi-square and Fisher oracles", ok,
              f"p(3.841)={p1:.5f}, p(6.635)={p2:.5f}, CI=({c.ci_low:.4f}, {c.ci_high:.4f})")


def test_recurrence_calibration(criterion):
    r2, r60 = recurrence_interval(2, 60), recurrence_interval(60, 60)
    top = format_recurrence(recurrence_interval(1, 60))
    criterion(4, "recurrence intervals", r2 == 30 and r60 == 1 and top == ">60 days",
              f"RI(2)={r2}, RI(60)={r60}, rank 1 -> {top!r}")


def test_null_calibration(criterion):
    cities = [SynthCity(f"c{i}", "US" if i < 10 else "CA", "America/Chicago", 0.40, 0.28,
                        tweets_per_hour=100) for i in range(20)]
    cfg = GeneratorConfig(seed=3, cities=cities, start=date(2017, 7, 1), end=date(2017, 8, 31))
    bins, _, _ = generate_bins(cfg)
    train, test = split_bins(bins, Window(date(2017, 7, 1), date(2017, 7, 31)),
                             Window(date(2017, 8, 1), date(2017, 8, 31)))
    models = fit_outcomes(train, FactorSpec.full())
    ok, parts = True, []
    for outcome in OUTCOMES:
        p = np.array([s.p_value for s in score_bins(test, models[outcome]) if s.eligible])
        share = float(np.mean(p < 0.05))
        ks = stats.kstest(p, "uniform").statistic
        ok &= len(p) >= 10**4 and abs(share - 0.05) <= 0.01 and ks <= 0.02
        parts.append(f"{outcome}: {len(p)} bins, {share:.2%} < 0.05, KS {ks:.4f}")
    criterion(5, "null calibration", ok, "; ".join(parts))


def detection_run():
    cities = [SynthCity("big", "US", "America/New_York", 0.40, 0.28, tweets_per_hour=420)]
    cities += [SynthCity(f"c{i}", ["US", "GB", "CA"][i % 3],
                         ["America/Chicago", "Europe/London", "America/Toronto"][i % 3],
                         0.40, 0.28, tweets_per_hour=100) for i in range(9)]
    cfg = GeneratorConfig(seed=11, cities=cities, start=date(2017, 8, 1), end=date(2017, 9, 29))
    strong = InjectedEvent("big", datetime(2017, 9, 10), datetime(2017, 9, 10, 23), "negative", 0.3, "strong")
    weak = InjectedEvent("big", datetime(2017, 9, 20), datetime(2017, 9, 20, 23), "positive", 0.15, "weak")
    bins, _, _ = generate_bins(cfg, [strong, weak])
    train, test = split_bins(bins, Window(date(2017, 8, 1), date(2017, 8, 30)),
                             Window(date(2017, 8, 31), date(2017, 9, 29)))
    n_day = sum(b.n_total for b in test if b.city_id == "big" and b.local_date == date(2017, 9, 10))
    models = fit_outcomes(train, FactorSpec.full())
    _, events = detect_events(test, models, cfg.registry(), 30, depth=100)
    _, only_strong = detect_events([b for b in test if b.local_date != date(2017, 9, 20)],
                                   models, cfg.registry(), 30, depth=100)
    both = evaluate_detection([strong, weak], events)
    single = evaluate_detection([strong], only_strong)
    return n_day, [r.rank for r in single.rows], [r.rank for r in both.rows]


def test_event_detection(criterion):
    n_day, single, both = detection_run()
    again = detection_run()
    ok = (n_day >= 10**4 and single == [1] and both[0] is not None and both[1] is not None
          and both[0] < both[1] and (n_day, single, both) == again)
    criterion(6, "injected event ranking", ok,
              f"{n_day} posts on event day, single rank {single}, delta 0.3/0.15 ranks {both}, repeatable")


def test_bias_reproduction(criterion):
    cities = []
    for cc, tz, m in [("US", "America/New_York", 4), ("GB", "Europe/London", 2),
                      ("AU", "Australia/Sydney", 2), ("IN", "Asia/Kolkata", 2)]:
        cities += [SynthCity(f"{cc.lower()}{i}", cc, tz, 0.40, 0.28 + (0.08 if cc == "US" else 0),
                             tweets_per_hour=100) for i in range(m)]
    cfg = GeneratorConfig(seed=7, cities=cities, start=date(2017, 8, 1), end=date(2017, 9, 29))
    bins, _, _ = generate_bins(cfg)
    train, test = split_bins(bins, Window(date(2017, 8, 1), date(2017, 8, 30)),
                             Window(date(2017, 8, 31), date(2017, 9, 29)))
    by_model = compare_models(train, test, BIAS_MODELS, cfg.registry(), 30, depth=100)
    city_share = 4 / len(cities)
    summary = {}
    for name, events in by_model.items():
        top = [e for e in events if e.polarity == "negative" and e.direction == "surplus"][:20]
        summary[name] = (sum(e.country == "US" for e in top), len(top))
    us_nc, n_nc = summary["no_city"]
    us_full, n_full = summary["full"]
    us_null, n_null = summary["null"]
    ok = (n_nc > 0 and us_nc / n_nc > city_share
          and abs(us_full - city_share * n_full) <= 2)
    criterion(7, "degenerate-model bias", ok,
              f"US share of top negative surplus: no_city {us_nc}/{n_nc}, full {us_full}/{n_full} "
              f"(proportional {city_share * n_full:.1f}), null {us_null}/{n_null}; city share {city_share:.0%}")


def test_merge_semantics(criterion):
    reg = make_registry(("nyc", "US"), ("la", "US"), ("manila", "PH"))

    def s(city, d, hour, stat):
        return DeviationScore(city, d, hour, "negative", 60, 40.0, stat, chi2_sf(stat), "surplus", True, 100)

    d = date(2017, 10, 2)
    a = merge_events([s("nyc", d, 14, 12.0), s("nyc", d, 15, 20.0)], reg)
    b = merge_events([s("nyc", d, 10, 9.0), s("la", d, 10, 11.0)], reg)
    c = merge_events([s("manila", date(2017, 11, k), 9, st) for k, st in ((25, 7.0), (26, 30.0), (27, 9.0))], reg)
    got = [(e[0].scope, e[0].max_statistic) for e in (a, b, c)]
    ok = (all(len(e) == 1 for e in (a, b, c))
          and got == [("city_day", 20.0), ("country_hour", 11.0), ("country_multiday", 30.0)])
    criterion(8, "merge semantics", ok, f"{got}")


def _run_all(config, out):
    return main(["all", "--config", str(config), "--out-dir", str(out)])


def test_end_to_end_determinism_and_scale(criterion, tmp_path):
    # byte-identical reruns on the shipped fixture
    rc1 = _run_all(FIXTURE_DIR / "config.json", tmp_path / "a")
    rc2 = _run_all(FIXTURE_DIR / "config.json", tmp_path / "b")
    cmp = filecmp.dircmp(tmp_path / "a", tmp_path / "b")
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    identical = rc1 == rc2 == 0 and not cmp.diff_files and not cmp.left_only and not cmp.right_only
    _, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", files, shallow=False)
    identical &= not mismatch and not errors

    # a million synthetic records through the whole pipeline
    big = tmp_path / "big"
    big.mkdir()
    cities = [SynthCity(f"c{i:02d}", ["US", "GB", "CA", "AU"][i % 4],
                        ["America/New_York", "Europe/London", "America/Toronto", "Australia/Sydney"][i % 4],
                        0.4, 0.25) for i in range(20)]
    cfg = GeneratorConfig(seed=1, cities=cities, start=date(2017, 8, 1), end=date(2017, 9, 11),
                          tweets_per_hour=50, noise_fraction=0.01)
    t0 = time.perf_counter()
    lines, manifest, weather = generate_corpus(cfg, [], default_lexicon())
    gen_s = time.perf_counter() - t0
    with open(big / "tweets.ndjson", "w") as fh:
        fh.writelines(l + "\n" for l in lines)
    n_lines = len(lines)
    del lines
    with open(big / "weather.csv", "w", newline="") as fh:
        write_weather_table(weather, fh)
    write_city_registry(cfg.registry(), big / "registry.csv")
    (big / "config.json").write_text(json.dumps({
        "registry": "registry.csv", "input": "tweets.ndjson", "weather": "weather.csv",
        "train_window": ["2017-08-01", "2017-08-28"], "test_window": ["2017-08-29", "2017-09-11"],
    }))
    t1 = time.perf_counter()
    rc = _run_all(big / "config.json", big / "out")
    pipe_s = time.perf_counter() - t1
    ok = identical and rc == 0 and n_lines >= 10**6 and pipe_s < 300
    criterion(9, "end-to-end determinism and scale", ok,
              f"fixture rerun identical={identical} over {len(files)} files; {n_lines} records, "
              f"pipeline {pipe_s:.0f}s (+{gen_s:.0f}s to generate)")
