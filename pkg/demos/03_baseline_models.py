"""Fitting baseline models of the share of positive and negative posts.

A synthetic corpus with known effects lets us check that the regression gets
them back. Every model is an OLS fit on dummy-coded city, hour, day and
weather plus the share of social posts.
"""
from datetime import date

import numpy as np

from citysent.model import PAPER_MODELS, FactorSpec, fit_model, model_table
from citysent.pipeline import Window, split_bins
from citysent.synth import FactorEffects, GeneratorConfig, SynthCity, generate_bins, true_coefficients

hour_effect = list(0.03 * np.sin(np.arange(24) / 24 * 2 * np.pi))
cities = [SynthCity(f"city{i}", "US", "America/Chicago", 0.35 + 0.02 * i, 0.25, tweets_per_hour=40)
          for i in range(8)]
cfg = GeneratorConfig(seed=42, cities=cities, start=date(2017, 7, 1), end=date(2017, 8, 31),
                      positive=FactorEffects(hour=hour_effect, weather={"rain": -0.02}, social_slope=0.1))
bins, weather, _ = generate_bins(cfg)
print(len(bins), "city-hour bins")

m = fit_model(bins, FactorSpec.full(), "positive")
truth = true_coefficients(cfg, m)
z = (m.beta - truth) / m.stderr
print(f"{m.n_coefficients} coefficients, r2 = {100 * m.r_squared:.2f}%")
print("share within 3 SE of the truth:", np.mean(np.abs(z) <= 3))
for name in ["city[city7]", "hour[6]", "weather[rain]", "social"]:
    j = m.column_names.index(name)
    print(f"  {name:14} fitted {m.beta[j]:+.4f}  true {truth[j]:+.4f}  se {m.stderr[j]:.4f}")

# the coefficient table: train on July, score correlation on August
train, test = split_bins(bins, Window(date(2017, 7, 1), date(2017, 7, 31)),
                         Window(date(2017, 8, 1), date(2017, 8, 31)))
for row in model_table(train, test, "positive"):
    c = row.correlation
    print(f"{row.label:26} k={row.n_coefficients:3} sig={row.n_significant:3} "
          f"r2={row.r_squared_pct:6.3f}%  r={c.r:.3f} ({c.ci_low:.3f}-{c.ci_high:.3f})")
