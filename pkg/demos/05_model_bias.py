"""Why the city factor matters.

One country's cities are simply grumpier (a higher negative baseline) and
nothing happens anywhere. A model that ignores the city keeps "discovering"
negative events in that country; the full model does not.
"""
from collections import Counter
from datetime import date

from citysent.pipeline import BIAS_MODELS, Window, compare_models, split_bins
from citysent.synth import GeneratorConfig, SynthCity, bias_report, generate_bins

cities = []
for country, tz, n in [("US", "America/New_York", 4), ("GB", "Europe/London", 2),
                       ("AU", "Australia/Sydney", 2), ("IN", "Asia/Kolkata", 2)]:
    cities += [SynthCity(f"{country.lower()}{i}", country, tz, 0.40,
                         0.28 + (0.08 if country == "US" else 0.0), tweets_per_hour=100)
               for i in range(n)]
cfg = GeneratorConfig(seed=7, cities=cities, start=date(2017, 8, 1), end=date(2017, 9, 29))
bins, _, _ = generate_bins(cfg)
train, test = split_bins(bins, Window(date(2017, 8, 1), date(2017, 8, 30)),
                         Window(date(2017, 8, 31), date(2017, 9, 29)))

by_model = compare_models(train, test, BIAS_MODELS, cfg.registry(), 30, depth=100)
for name, events in by_model.items():
    top = [e for e in events if e.polarity == "negative" and e.direction == "surplus"][:20]
    print(f"{name:8} top negative-surplus events by country: {dict(Counter(e.country for e in top))}")

print("US holds", 4 / len(cities), "of the cities")
for row in bias_report(by_model, cfg.registry()):
    if row.polarity == "negative" and row.country == "US":
        print(row)
