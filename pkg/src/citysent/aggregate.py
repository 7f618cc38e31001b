"""City-hour bins: counting, merging, weather join and CSV export."""
from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass
from datetime import date
from importlib import resources
from typing import Dict, Iterable, List, NamedTuple, Optional, Tuple

from .geo import LocalTime
from .ingest import Interaction


class WeatherCategory(str, enum.Enum):
    CLEAR = "clear"
    CLOUDS = "clouds"
    FOG = "fog"
    HAZE = "haze"
    RAIN = "rain"
    SNOW = "snow"
    STORM = "storm"


WEATHER_LEVELS = [w.value for w in WeatherCategory]

# provider group names that fix the category when they lead a description
_GROUP_WORDS = {
    "clear": WeatherCategory.CLEAR,
    "sunny": WeatherCategory.CLEAR,
    "clouds": WeatherCategory.CLOUDS,
    "cloudy": WeatherCategory.CLOUDS,
    "overcast": WeatherCategory.CLOUDS,
    "fog": WeatherCategory.FOG,
    "mist": WeatherCategory.FOG,
    "haze": WeatherCategory.HAZE,
    "smoke": WeatherCategory.HAZE,
    "dust": WeatherCategory.HAZE,
    "sand": WeatherCategory.HAZE,
    "rain": WeatherCategory.RAIN,
    "drizzle": WeatherCategory.RAIN,
    "showers": WeatherCategory.RAIN,
    "snow": WeatherCategory.SNOW,
    "sleet": WeatherCategory.SNOW,
    "thunderstorm": WeatherCategory.STORM,
    "storm": WeatherCategory.STORM,
    "squalls": WeatherCategory.STORM,
    "tornado": WeatherCategory.STORM,
}

BIN_HEADER = ["city_id", "local_date", "hour", "day_of_week", "n_total", "n_pos",
              "n_neg", "n_social", "weather", "p_pos", "p_neg", "p_social"]
WEATHER_HEADER = ["city_id", "local_date", "hour", "category"]

BinKey = Tuple[str, date, int]


class WeatherError(ValueError):
    pass


def _load_weather_map() -> Dict[str, WeatherCategory]:
    text = resources.files("citysent.data").joinpath("weather_map.csv").read_text("utf-8")
    return {
        row["description"].strip().lower(): WeatherCategory(row["category"])
        for row in csv.DictReader(io.StringIO(text))
    }


_WEATHER_MAP: Optional[Dict[str, WeatherCategory]] = None


def map_weather_condition(raw_description: str) -> WeatherCategory:
    """Map a provider's free-text weather description onto the seven categories."""
    global _WEATHER_MAP
    if _WEATHER_MAP is None:
        _WEATHER_MAP = _load_weather_map()
    desc = " ".join(raw_description.lower().split())
    hit = _WEATHER_MAP.get(desc)
    if hit is not None:
        return hit
    first = desc.split(" ", 1)[0] if desc else ""
    if first in _GROUP_WORDS:
        return _GROUP_WORDS[first]
    raise WeatherError(f"unmappable weather description {raw_description!r}; extend weather_map.csv")


class WeatherTable(dict):
    """``(city_id, local_date, hour) -> WeatherCategory``."""


def load_weather_table(path) -> WeatherTable:
    table = WeatherTable()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row_no, row in enumerate(reader, 2):
            try:
                cat = WeatherCategory(row["category"].strip().lower())
            except ValueError:
                raise WeatherError(f"row {row_no}: unknown weather category {row['category']!r}") from None
            key = (row["city_id"], date.fromisoformat(row["local_date"]), int(row["hour"]))
            if not 0 <= key[2] <= 23:
                raise WeatherError(f"row {row_no}: hour {key[2]} outside 0..23")
            if key in table:
                raise WeatherError(f"row {row_no}: duplicate weather entry for {key}")
            table[key] = cat
    return table


def write_weather_table(table: WeatherTable, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(WEATHER_HEADER)
    for (city, d, hour) in sorted(table):
        w.writerow([city, d.isoformat(), hour, WeatherCategory(table[(city, d, hour)]).value])


class ScoredRecord(NamedTuple):
    """What binning needs from a located, scored record."""

    city_id: str
    local: LocalTime
    interaction: Interaction
    is_positive: bool
    is_negative: bool


@dataclass
class PartialBin:
    city_id: str
    local_date: date
    hour: int
    day_of_week: int
    n_total: int = 0
    n_pos: int = 0
    n_neg: int = 0
    n_social: int = 0

    @property
    def key(self) -> BinKey:
        return (self.city_id, self.local_date, self.hour)

    def counts(self) -> Tuple[int, int, int, int]:
        return (self.n_total, self.n_pos, self.n_neg, self.n_social)


def merge_partial_bins(a: PartialBin, b: PartialBin) -> PartialBin:
    if a.key != b.key:
        raise ValueError(f"cannot merge bins with different keys {a.key} and {b.key}")
    return PartialBin(a.city_id, a.local_date, a.hour, a.day_of_week,
                      a.n_total + b.n_total, a.n_pos + b.n_pos,
                      a.n_neg + b.n_neg, a.n_social + b.n_social)


def bin_stream(records: Iterable[ScoredRecord]) -> Dict[BinKey, PartialBin]:
    bins: Dict[BinKey, PartialBin] = {}
    for r in records:
        key = (r.city_id, r.local.local_date, r.local.hour)
        b = bins.get(key)
        if b is None:
            b = bins[key] = PartialBin(r.city_id, r.local.local_date, r.local.hour,
                                       r.local.day_of_week)
        b.n_total += 1
        b.n_pos += r.is_positive
        b.n_neg += r.is_negative
        b.n_social += r.interaction is Interaction.SOCIAL
    return bins


def merge_bin_maps(*maps: Dict[BinKey, PartialBin]) -> Dict[BinKey, PartialBin]:
    out: Dict[BinKey, PartialBin] = {}
    for m in maps:
        for key, b in m.items():
            out[key] = merge_partial_bins(out[key], b) if key in out else b
    return out


@dataclass(frozen=True)
class CityHourBin:
    city_id: str
    local_date: date
    hour: int
    day_of_week: int
    n_total: int
    n_pos: int
    n_neg: int
    n_social: int
    weather: Optional[WeatherCategory] = None

    @property
    def key(self) -> BinKey:
        return (self.city_id, self.local_date, self.hour)

    @property
    def p_pos(self) -> float:
        return self.n_pos / self.n_total

    @property
    def p_neg(self) -> float:
        return self.n_neg / self.n_total

    @property
    def p_social(self) -> float:
        return self.n_social / self.n_total

    def labeled(self, polarity: str) -> int:
        return self.n_pos if polarity == "positive" else self.n_neg


def finalize_bins(partials, weather: Optional[WeatherTable] = None) -> List[CityHourBin]:
    """Join weather, drop empty bins, sort by ``(city_id, local_date, hour)``."""
    if isinstance(partials, dict):
        partials = partials.values()
    weather = weather or {}
    out = []
    for b in partials:
        if b.n_total <= 0:
            continue
        if not (b.n_pos <= b.n_total and b.n_neg <= b.n_total and b.n_social <= b.n_total):
            raise ValueError(f"inconsistent counts in bin {b.key}")
        out.append(CityHourBin(b.city_id, b.local_date, b.hour, b.day_of_week,
                               b.n_total, b.n_pos, b.n_neg, b.n_social,
                               weather.get(b.key)))
    out.sort(key=lambda b: b.key)
    return out


def _fmt(x: float) -> str:
    return repr(float(x))


def write_bins_csv(bins: Iterable[CityHourBin], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(BIN_HEADER)
    for b in bins:
        w.writerow([b.city_id, b.local_date.isoformat(), b.hour, b.day_of_week,
                    b.n_total, b.n_pos, b.n_neg, b.n_social,
                    b.weather.value if b.weather else "",
                    _fmt(b.p_pos), _fmt(b.p_neg), _fmt(b.p_social)])


def read_bins_csv(fh) -> List[CityHourBin]:
    out = []
    for row in csv.DictReader(fh):
        out.append(CityHourBin(
            row["city_id"], date.fromisoformat(row["local_date"]), int(row["hour"]),
            int(row["day_of_week"]), int(row["n_total"]), int(row["n_pos"]),
            int(row["n_neg"]), int(row["n_social"]),
            WeatherCategory(row["weather"]) if row["weather"] else None,
        ))
    return out
