from datetime import date, datetime

import numpy as np
import pytest

from citysent.deviation import DeviationScore, MergedEvent
from citysent.ingest import FilterConfig, IngestReport
from citysent.model import FactorSpec, fit_model
from citysent.pipeline import ingest_to_bins
from citysent.sentiment import default_lexicon
from citysent.synth import (ConfigError, FactorEffects, GeneratorConfig, InjectedEvent, SynthCity,
                            bias_report, evaluate_detection, generate_bins, generate_corpus,
                            true_coefficients)

from conftest import make_registry


def small_cfg(**kw):
    cities = [SynthCity("nyc", "US", "America/New_York", 0.40, 0.25, display_name="New York",
                        aliases=["nyc", "new york"]),
              SynthCity("london", "GB", "Europe/London", 0.35, 0.30, tweets_per_hour=15)]
    base = dict(seed=5, cities=cities, start=date(2017, 10, 2), end=date(2017, 10, 4),
                tweets_per_hour=10,
                negative=FactorEffects(hour=[0.02 * (h % 3) for h in range(24)]))
    base.update(kw)
    return GeneratorConfig(**base)


def test_corpus_is_deterministic():
    lex = default_lexicon()
    a = generate_corpus(small_cfg(noise_fraction=0.05), [], lex)
    b = generate_corpus(small_cfg(noise_fraction=0.05), [], lex)
    assert a[0] == b[0] and a[1] == b[1]
    c = generate_corpus(small_cfg(seed=6), [], lex)
    assert c[0] != a[0]


def test_corpus_text_reproduces_drawn_labels():
    """Running the text back through ingest rebuilds exactly the drawn bins."""
    cfg = small_cfg()
    lines, manifest, weather = generate_corpus(cfg, [], default_lexicon())
    report = IngestReport()
    bins, report = ingest_to_bins(lines, cfg.registry(), default_lexicon(), weather, report=report)
    direct, _, _ = generate_bins(cfg)
    assert bins == direct
    assert report.kept == manifest["records"]["posts"]


def test_noise_records_are_dropped_for_their_reason():
    cfg = small_cfg(noise_fraction=0.1)
    lines, manifest, weather = generate_corpus(cfg, [], default_lexicon())
    _, report = ingest_to_bins(lines, cfg.registry(), default_lexicon(), weather)
    noise = manifest["records"]["noise"]
    assert report.dropped_language == noise["language"]
    assert report.dropped_follower == noise["follower"]
    assert report.dropped_empty_location == noise["empty_location"]
    assert report.dropped_malformed == noise["malformed"]
    assert report.unresolved_location == noise["unresolved"]


def test_base_rate_concentration():
    cfg = GeneratorConfig(seed=1, cities=[SynthCity("a", "US", "UTC", 0.4, 0.2)],
                          start=date(2017, 1, 1), end=date(2017, 2, 11), tweets_per_hour=100)
    bins, _, _ = generate_bins(cfg)
    n = sum(b.n_total for b in bins)
    assert n >= 10**5
    assert sum(b.n_pos for b in bins) / n == pytest.approx(0.4, abs=0.005)


def test_event_raises_realized_proportion():
    cfg = GeneratorConfig(seed=2, cities=[SynthCity("a", "US", "UTC", 0.4, 0.2, tweets_per_hour=450)],
                          start=date(2017, 3, 1), end=date(2017, 3, 3))
    ev = InjectedEvent("a", datetime(2017, 3, 2), datetime(2017, 3, 2, 23), "negative", 0.3, "e")
    bins, _, _ = generate_bins(cfg, [ev])
    day = [b for b in bins if b.local_date == date(2017, 3, 2)]
    rest = [b for b in bins if b.local_date != date(2017, 3, 2)]
    n_day = sum(b.n_total for b in day)
    assert n_day >= 10**4
    lift = sum(b.n_neg for b in day) / n_day - sum(b.n_neg for b in rest) / sum(b.n_total for b in rest)
    assert lift == pytest.approx(0.3, abs=0.02)


def test_events_follow_local_time():
    cfg = GeneratorConfig(seed=4, cities=[SynthCity("tokyo", "JP", "Asia/Tokyo", 0.4, 0.1,
                                                    tweets_per_hour=200)],
                          start=date(2017, 5, 1), end=date(2017, 5, 2))
    ev = InjectedEvent("tokyo", datetime(2017, 5, 2, 9), datetime(2017, 5, 2, 9), "negative", 0.5)
    bins, _, _ = generate_bins(cfg, [ev])
    hot = max(bins, key=lambda b: b.p_neg)
    assert (hot.local_date, hot.hour) == (date(2017, 5, 2), 9)


@pytest.mark.parametrize("kw,match", [
    (dict(cities=[]), "city"),
    (dict(weather_probs={"clear": 0.5}), "weather_probs"),
    (dict(negative=FactorEffects(hour=[0.9] * 24)), "outside"),
])
def test_config_validation(kw, match):
    with pytest.raises(ConfigError, match=match):
        small_cfg(**kw)


def test_event_validation():
    cfg = small_cfg()
    with pytest.raises(ConfigError, match="outside"):
        generate_bins(cfg, [InjectedEvent("nyc", datetime(2017, 10, 2), datetime(2017, 10, 2, 5),
                                          "negative", 0.9)])
    with pytest.raises(ConfigError, match="unknown city"):
        generate_bins(cfg, [InjectedEvent("paris", datetime(2017, 10, 2), datetime(2017, 10, 2, 5),
                                          "negative", 0.1)])


def test_config_json_round_trip():
    cfg = small_cfg()
    again = GeneratorConfig.from_json(cfg.to_json())
    assert again.config_hash() == cfg.config_hash()


def test_true_coefficients_in_model_terms():
    cfg = small_cfg(end=date(2017, 10, 12))
    bins, _, _ = generate_bins(cfg)
    m = fit_model(bins, FactorSpec.of("city", "hour"), "negative")
    truth = true_coefficients(cfg, m)
    assert truth[m.column_names.index("city[nyc]")] == pytest.approx(0.25 - 0.30)
    assert truth[m.column_names.index("hour[2]")] == pytest.approx(0.04)


def _event(city, rank, pol="negative", direction="surplus", d=date(2017, 10, 3), country="US"):
    s = DeviationScore(city, d, 12, pol, 10, 5.0, 50.0 - rank, 1e-6, direction, True, 40)
    return MergedEvent("city_day", [s], city, country, pol, direction, s.statistic,
                       datetime(d.year, d.month, d.day, 12), datetime(d.year, d.month, d.day, 12), rank)


def test_evaluate_detection():
    inj = [InjectedEvent("nyc", datetime(2017, 10, 3), datetime(2017, 10, 3, 23), "negative", 0.3, "big"),
           InjectedEvent("la", datetime(2017, 10, 3), datetime(2017, 10, 3, 23), "positive", 0.2, "small")]
    events = [_event("nyc", 1), _event("chi", 2), _event("la", 3, "positive")]
    rep = evaluate_detection(inj, events, top_k=2)
    assert [(r.label, r.rank, r.detected) for r in rep.rows] == [("big", 1, True), ("small", 3, False)]
    assert rep.false_alarms == 1


def test_bias_report_counts():
    reg = make_registry(("a1", "A"), ("a2", "A"), ("b1", "B"), ("b2", "B"))
    full = [_event("a1", 1, country="A"), _event("b1", 2, country="B")]
    skewed = [_event(c, i + 1, country="A") for i, c in enumerate(["a1", "a2", "a1", "a2"])]
    rows = bias_report({"full": full, "no_city": skewed}, reg, top_k=20, margin=2)
    get = {(r.model, r.polarity, r.country): r for r in rows}
    assert get[("full", "negative", "A")].events == 1
    assert get[("no_city", "negative", "A")].events == 4
    assert get[("no_city", "negative", "A")].share == 1.0
    assert get[("no_city", "negative", "A")].city_share == 0.5
    assert get[("no_city", "negative", "A")].flagged
