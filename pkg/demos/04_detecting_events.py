"""Finding hours that deviate from the baseline, and merging them into events.

We plant two events in a synthetic corpus (a strong negative day and a weaker
positive day) and see where they land in the combined ranking.
"""
from datetime import date, datetime

from citysent.cli import describe_event
from citysent.deviation import format_recurrence
from citysent.model import FactorSpec
from citysent.pipeline import Window, detect_events, fit_outcomes, split_bins
from citysent.synth import GeneratorConfig, InjectedEvent, SynthCity, evaluate_detection, generate_bins

cities = [SynthCity("metro", "US", "America/New_York", 0.40, 0.28, tweets_per_hour=300,
                    display_name="Metro City")]
cities += [SynthCity(f"town{i}", "US", "America/Chicago", 0.40, 0.28, tweets_per_hour=80) for i in range(4)]
cfg = GeneratorConfig(seed=8, cities=cities, start=date(2017, 8, 1), end=date(2017, 9, 29))
events = [InjectedEvent("metro", datetime(2017, 9, 10), datetime(2017, 9, 10, 23), "negative", 0.3, "storm"),
          InjectedEvent("metro", datetime(2017, 9, 20), datetime(2017, 9, 20, 23), "positive", 0.15, "parade")]
bins, _, _ = generate_bins(cfg, events)

train, test = split_bins(bins, Window(date(2017, 8, 1), date(2017, 8, 30)),
                         Window(date(2017, 8, 31), date(2017, 9, 29)))
models = fit_outcomes(train, FactorSpec.full())
D = 30  # days in the test window
scores, merged = detect_events(test, models, cfg.registry(), D, depth=100)
print(sum(s.eligible for s in scores), "eligible bin scores,", len(merged), "merged events")

for ev in merged[:8]:
    print(f"{ev.rank:3}  {ev.polarity:8} {ev.direction:8} {ev.scope:17} max chi2 {ev.max_statistic:7.1f}  "
          f"every {format_recurrence(ev.recurrence):>9}  {describe_event(ev, cfg.registry())}")

for row in evaluate_detection(events, merged).rows:
    print(row)
