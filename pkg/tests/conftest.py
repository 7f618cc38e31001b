from datetime import date
from pathlib import Path

import pytest

from citysent.aggregate import CityHourBin, WeatherCategory
from citysent.geo import CityEntry, CityRegistry
from citysent.sentiment import Lexicon

FIXTURE_DIR = Path(__file__).resolve().parents[1] / "src" / "citysent" / "data" / "fixture"


@pytest.fixture(scope="session")
def small_lexicon():
    return Lexicon(terms={"love": 3, "hate": -4, "good": 2, "sad": -3},
                   boosters={"very": 1, "slightly": -1}, negators=frozenset({"not"}))


def make_registry(*cities):
    """``cities`` are ``(city_id, country[, tz[, aliases]])`` tuples."""
    entries = []
    for c in cities:
        cid, country = c[0], c[1]
        tz = c[2] if len(c) > 2 else "UTC"
        aliases = tuple(c[3]) if len(c) > 3 else (cid,)
        entries.append(CityEntry(cid, cid.title(), country, tz, 0, aliases))
    return CityRegistry(entries)


@pytest.fixture
def us_registry():
    return make_registry(("nyc", "US", "America/New_York", ["nyc", "new york"]),
                         ("la", "US", "America/Los_Angeles", ["la", "los angeles"]),
                         ("london", "GB", "Europe/London", ["london"]))


def make_bin(city="nyc", d=date(2017, 10, 2), hour=10, n=100, pos=40, neg=30, social=30,
             weather="clear", dow=None):
    return CityHourBin(city, d, hour, d.weekday() if dow is None else dow, n, pos, neg, social,
                       None if weather is None else WeatherCategory(weather))


# -- acceptance summary ---------------------------------------------------------

ACCEPTANCE_RESULTS = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance criterion's verdict for the end-of-run summary.

    Usage: ``criterion(number, title, passed, detail)``; the call also asserts.
    """
    def record(number, title, passed, detail=""):
        line = f"[acceptance {number}] {'PASS' if passed else 'FAIL'}  {title}  ({detail})"
        ACCEPTANCE_RESULTS[number] = line
        print(line)
        assert passed, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_RESULTS):
            terminalreporter.write_line(ACCEPTANCE_RESULTS[number])
