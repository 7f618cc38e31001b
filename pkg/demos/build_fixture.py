"""Regenerate the small three-city dataset shipped in ``citysent/data/fixture``.

Boston posts sometimes carry the profile location "Greater Boston Area",
which the registry does not list; the recorded gazetteer resolves it.
Chicago gets a strong negative surplus on the first test day.

    python3 demos/build_fixture.py [target_dir]
"""
import gzip
import json
import sys
from pathlib import Path

import dataclasses

from citysent.geo import CityRegistry, write_city_registry
from citysent.aggregate import write_weather_table
from citysent.sentiment import default_lexicon
from citysent.synth import GeneratorConfig, InjectedEvent, generate_corpus

HERE = Path(__file__).resolve().parent
TARGET = Path(sys.argv[1]) if len(sys.argv) > 1 else HERE.parent / "src/citysent/data/fixture"

HOURLY = [0.0] * 24
for h in range(7, 11):
    HOURLY[h] = -0.03  # morning commute is grumpier
SYNTH = {
    "generator": {
        "seed": 20171009,
        "start": "2017-10-02",
        "end": "2017-10-10",
        "tweets_per_hour": 35,
        "noise_fraction": 0.02,
        "weather_probs": {"clear": 0.45, "clouds": 0.35, "rain": 0.15, "fog": 0.05},
        "positive": {"hour": [-v for v in HOURLY], "day": [0, 0, 0, 0, 0.02, 0.04, 0.03],
                     "weather": {"rain": -0.03}, "social_slope": 0.05},
        "negative": {"hour": HOURLY[:], "day": [0.02, 0, 0, 0, 0, 0, 0],
                     "weather": {"rain": 0.03}, "social_slope": 0.0},
        "cities": [
            {"city_id": "boston", "country": "US", "tz": "America/New_York", "base_pos": 0.42,
             "base_neg": 0.25, "tweets_per_hour": 45, "display_name": "Boston",
             "aliases": ["boston", "boston, ma", "Greater Boston Area"],
             "fallback_offset_minutes": -300},
            {"city_id": "chicago", "country": "US", "tz": "America/Chicago", "base_pos": 0.40,
             "base_neg": 0.27, "tweets_per_hour": 40, "display_name": "Chicago",
             "aliases": ["chicago", "chicago, il", "chi-town"], "fallback_offset_minutes": -360},
            {"city_id": "london", "country": "GB", "tz": "Europe/London", "base_pos": 0.38,
             "base_neg": 0.26, "tweets_per_hour": 35, "display_name": "London",
             "aliases": ["london", "london, england"], "fallback_offset_minutes": 0},
        ],
    },
    "events": [
        {"city_id": "chicago", "start": "2017-10-09T00:00:00", "end": "2017-10-09T23:00:00",
         "polarity": "negative", "delta": 0.25, "label": "chicago_bad_day"},
    ],
    "out": "synth",
}
CONFIG = {
    "registry": "registry.csv",
    "input": "tweets.ndjson.gz",
    "weather": "weather.csv",
    "gazetteer": {"recorded": "gazetteer.json"},
    "out_dir": "out",
    "train_window": ["2017-10-02", "2017-10-08"],
    "test_window": ["2017-10-09", "2017-10-10"],
    "filter": {"languages": ["en"], "follower_threshold": 300000},
    "min_bin_size": 5,
    "epsilon_clamp": 0.001,
    "alpha": 0.05,
    "top_k": 20,
    "merge_depth": 100,
    "timeline_cities": ["chicago"],
    "manifest": "manifest.json",
    "synth": "synth.json",
}
GAZETTEER = {
    "Greater Boston Area": [
        {"display_name": "Greater Boston", "type": "region", "importance": 0.4},
        {"display_name": "Boston, Suffolk County, Massachusetts, United States",
         "type": "city", "importance": 0.8},
    ],
    "Mars, the red planet": [],
}


def main():
    TARGET.mkdir(parents=True, exist_ok=True)
    gen = GeneratorConfig.from_json(SYNTH["generator"])
    events = [InjectedEvent.from_json(e) for e in SYNTH["events"]]
    lines, manifest, weather = generate_corpus(gen, events, default_lexicon())
    # the registry leaves out the alias only the gazetteer knows
    entries = [dataclasses.replace(e, aliases=tuple(a for a in e.aliases if a != "Greater Boston Area"))
               for e in gen.registry()]
    write_city_registry(CityRegistry(entries), TARGET / "registry.csv")
    with gzip.GzipFile(TARGET / "tweets.ndjson.gz", "wb", mtime=0) as gz:
        gz.write("".join(l + "\n" for l in lines).encode())
    with open(TARGET / "weather.csv", "w", newline="") as fh:
        write_weather_table(weather, fh)
    for name, doc in (("manifest.json", manifest), ("synth.json", SYNTH),
                      ("config.json", CONFIG), ("gazetteer.json", GAZETTEER)):
        (TARGET / name).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    print(f"{len(lines)} lines written to {TARGET}")


if __name__ == "__main__":
    main()
