"""From a free-text profile location and a UTC timestamp to a city-hour.

Aliases are tried first; the gazetteer only sees what the registry cannot
answer, and its answers are cached.
"""
from datetime import datetime, timezone

from citysent.geo import (RecordedGazetteer, ResolutionCache, load_city_registry,
                          localize_timestamp, resolve_location)
from citysent.data import __file__ as data_init
from pathlib import Path

fixture = Path(data_init).parent / "fixture"
registry = load_city_registry(fixture / "registry.csv")
gazetteer = RecordedGazetteer.from_file(fixture / "gazetteer.json")
cache = ResolutionCache()

for raw in ["Boston, MA", "chi-town", "Greater Boston Area", "Greater Boston Area",
            "Mars, the red planet", ""]:
    print(f"{raw!r:26}", resolve_location(raw, registry, gazetteer, cache))
print("gazetteer calls:", gazetteer.calls)  # the repeat came from the cache

# the same instant lands in different local hours (and days) per city
t = int(datetime(2017, 10, 9, 3, 30, tzinfo=timezone.utc).timestamp())
for entry in registry:
    print(entry.city_id, localize_timestamp(t, entry))

# daylight saving: 06:30Z on 5 Nov 2017 is 01:30 in New York after clocks fell back
from citysent.geo import CityEntry
ny = CityEntry("nyc", "New York", "US", "America/New_York", -300)
print(localize_timestamp(int(datetime(2017, 11, 5, 6, 30, tzinfo=timezone.utc).timestamp()), ny))
