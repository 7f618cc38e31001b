"""Synthetic corpora with known baselines and injected events.

Generation follows the same linear-probability structure the baseline
models fit, so a correctly specified model should recover the generating
effects. Every city draws from its own random substream spawned from the
master seed.
"""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, field
from datetime import date, datetime, timedelta
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .aggregate import (WEATHER_LEVELS, CityHourBin, PartialBin, WeatherCategory,
                        WeatherTable, finalize_bins, merge_partial_bins)
from .deviation import MergedEvent
from .geo import CityEntry, CityRegistry, local_to_utc, localize_timestamp
from .ingest import format_timestamp
from .model import FittedModel

DEFAULT_WEATHER_PROBS = {"clear": 0.40, "clouds": 0.35, "rain": 0.13, "fog": 0.04,
                         "haze": 0.04, "snow": 0.02, "storm": 0.02}

POSITIVE_WORDS = ["love", "great", "happy", "awesome", "beautiful", "excited", "amazing", "fun"]
NEGATIVE_WORDS = ["hate", "awful", "sad", "angry", "terrible", "worst", "annoyed", "tired"]
FILLER_WORDS = ["just", "got", "home", "the", "bus", "was", "on", "time", "today", "coffee",
                "and", "then", "work", "weekend", "watching", "game", "tonight", "with",
                "friends", "lunch", "train", "city", "morning", "traffic", "news", "new",
                "phone", "music", "dinner", "walk", "park", "store", "class", "meeting"]


class ConfigError(ValueError):
    pass


@dataclass
class FactorEffects:
    hour: List[float] = field(default_factory=lambda: [0.0] * 24)
    day: List[float] = field(default_factory=lambda: [0.0] * 7)
    weather: Dict[str, float] = field(default_factory=dict)
    social_slope: float = 0.0

    def __post_init__(self):
        if len(self.hour) != 24 or len(self.day) != 7:
            raise ConfigError("hour effects need 24 values and day effects 7")
        unknown = set(self.weather) - set(WEATHER_LEVELS)
        if unknown:
            raise ConfigError(f"unknown weather categories {sorted(unknown)}")

    def weather_vector(self) -> np.ndarray:
        return np.array([self.weather.get(w, 0.0) for w in WEATHER_LEVELS])


@dataclass
class SynthCity:
    city_id: str
    country: str
    tz: str
    base_pos: float
    base_neg: float
    tweets_per_hour: Optional[float] = None
    social_rate: float = 0.3
    display_name: str = ""
    aliases: List[str] = field(default_factory=list)
    fallback_offset_minutes: int = 0

    def entry(self) -> CityEntry:
        aliases = tuple(self.aliases) or (self.city_id.replace("_", " "),)
        return CityEntry(self.city_id, self.display_name or self.city_id, self.country,
                         self.tz, self.fallback_offset_minutes, aliases)


@dataclass
class InjectedEvent:
    city_id: str
    start: datetime
    end: datetime
    polarity: str
    delta: float
    label: str = ""

    def __post_init__(self):
        if self.end < self.start:
            raise ConfigError(f"event {self.label!r}: end before start")
        if self.polarity not in ("positive", "negative"):
            raise ConfigError(f"event {self.label!r}: polarity must be positive or negative")

    @property
    def direction(self) -> str:
        return "surplus" if self.delta > 0 else "deficit"

    def to_json(self) -> dict:
        return {"city_id": self.city_id, "start": self.start.isoformat(),
                "end": self.end.isoformat(), "polarity": self.polarity,
                "delta": self.delta, "label": self.label}

    @classmethod
    def from_json(cls, d: dict) -> "InjectedEvent":
        return cls(d["city_id"], datetime.fromisoformat(d["start"]),
                   datetime.fromisoformat(d["end"]), d["polarity"], float(d["delta"]),
                   d.get("label", ""))


@dataclass
class GeneratorConfig:
    seed: int
    cities: List[SynthCity]
    start: date
    end: date
    positive: FactorEffects = field(default_factory=FactorEffects)
    negative: FactorEffects = field(default_factory=FactorEffects)
    tweets_per_hour: float = 20.0
    weather_probs: Dict[str, float] = field(default_factory=lambda: dict(DEFAULT_WEATHER_PROBS))
    # share of extra records that the ingest filters should reject
    noise_fraction: float = 0.0

    def __post_init__(self):
        if not self.cities:
            raise ConfigError("at least one city is required")
        if self.end < self.start:
            raise ConfigError("window end before start")
        if len({c.city_id for c in self.cities}) != len(self.cities):
            raise ConfigError("duplicate city ids")
        probs = np.array([self.weather_probs.get(w, 0.0) for w in WEATHER_LEVELS])
        if np.any(probs < 0) or not np.isclose(probs.sum(), 1.0):
            raise ConfigError("weather_probs must be non-negative and sum to 1")
        for c in self.cities:
            for pol in ("positive", "negative"):
                lo, hi = self.proportion_range(c, pol)
                if not (0.0 < lo and hi < 1.0):
                    raise ConfigError(
                        f"city {c.city_id}: {pol} proportion can reach [{lo:.3f}, {hi:.3f}], outside (0, 1)"
                    )

    def effects(self, polarity: str) -> FactorEffects:
        return self.positive if polarity == "positive" else self.negative

    def proportion_range(self, c: SynthCity, polarity: str, delta: float = 0.0):
        eff = self.effects(polarity)
        base = c.base_pos if polarity == "positive" else c.base_neg
        present = [w for w in WEATHER_LEVELS if self.weather_probs.get(w, 0.0) > 0]
        wv = [eff.weather.get(w, 0.0) for w in present]
        slope = eff.social_slope
        lo = base + min(eff.hour) + min(eff.day) + min(wv) + min(0.0, slope) + min(0.0, delta)
        hi = base + max(eff.hour) + max(eff.day) + max(wv) + max(0.0, slope) + max(0.0, delta)
        return lo, hi

    def registry(self) -> CityRegistry:
        return CityRegistry(c.entry() for c in self.cities)

    def city(self, city_id: str) -> SynthCity:
        for c in self.cities:
            if c.city_id == city_id:
                return c
        raise KeyError(city_id)

    def to_json(self) -> dict:
        d = asdict(self)
        d["start"] = self.start.isoformat()
        d["end"] = self.end.isoformat()
        return d

    @classmethod
    def from_json(cls, d: dict) -> "GeneratorConfig":
        d = dict(d)
        d["cities"] = [SynthCity(**c) for c in d["cities"]]
        d["start"] = date.fromisoformat(d["start"])
        d["end"] = date.fromisoformat(d["end"])
        for pol in ("positive", "negative"):
            if pol in d:
                d[pol] = FactorEffects(**d[pol])
        return cls(**d)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def validate_events(cfg: GeneratorConfig, events: Sequence[InjectedEvent]) -> None:
    for ev in events:
        try:
            c = cfg.city(ev.city_id)
        except KeyError:
            raise ConfigError(f"event {ev.label!r}: unknown city {ev.city_id!r}") from None
        lo, hi = cfg.proportion_range(c, ev.polarity, ev.delta)
        if not (0.0 < lo and hi < 1.0):
            raise ConfigError(f"event {ev.label!r} pushes the {ev.polarity} proportion outside (0, 1)")


@dataclass
class CityDraw:
    """Per-UTC-hour draws for one city."""

    city: SynthCity
    utc_start: np.ndarray
    local_date: List[date]
    hour: np.ndarray
    dow: np.ndarray
    weather: np.ndarray  # index into WEATHER_LEVELS
    n: np.ndarray
    n_social: np.ndarray
    n_pos: np.ndarray
    n_neg: np.ndarray
    p_pos: np.ndarray
    p_neg: np.ndarray
    rng: np.random.Generator  # continues the city stream for per-post detail


def _city_hours(c: SynthCity, start: date, end: date):
    entry = c.entry()
    t0 = local_to_utc(start, 0, entry)
    t1 = local_to_utc(end + timedelta(days=1), 0, entry)
    utc = np.arange(t0, t1, 3600, dtype=np.int64)
    local = [localize_timestamp(int(t), entry) for t in utc]
    return utc, local


def _in_event(ev: InjectedEvent, d: date, hour: int) -> bool:
    t = datetime(d.year, d.month, d.day, hour)
    return t <= ev.end and t + timedelta(hours=1) > ev.start


def simulate(cfg: GeneratorConfig, events: Sequence[InjectedEvent] = ()) -> List[CityDraw]:
    validate_events(cfg, events)
    children = np.random.SeedSequence(cfg.seed).spawn(len(cfg.cities))
    probs = np.array([cfg.weather_probs.get(w, 0.0) for w in WEATHER_LEVELS])
    draws = []
    for c, ss in zip(cfg.cities, children):
        rng = np.random.default_rng(ss)
        utc, local = _city_hours(c, cfg.start, cfg.end)
        k = len(utc)
        hour = np.array([lt.hour for lt in local])
        dow = np.array([lt.day_of_week for lt in local])
        weather = rng.choice(len(WEATHER_LEVELS), size=k, p=probs)
        lam = c.tweets_per_hour if c.tweets_per_hour is not None else cfg.tweets_per_hour
        n = rng.poisson(lam, size=k)
        n_social = rng.binomial(n, c.social_rate)
        p_social = np.divide(n_social, n, out=np.zeros(k), where=n > 0)
        props = {}
        for pol, base in (("positive", c.base_pos), ("negative", c.base_neg)):
            eff = cfg.effects(pol)
            p = (base + np.asarray(eff.hour)[hour] + np.asarray(eff.day)[dow]
                 + eff.weather_vector()[weather] + eff.social_slope * p_social)
            for ev in events:
                if ev.city_id == c.city_id and ev.polarity == pol:
                    mask = np.array([_in_event(ev, lt.local_date, lt.hour) for lt in local], bool)
                    p = p + ev.delta * mask
            props[pol] = p
        n_pos = rng.binomial(n, props["positive"])
        n_neg = rng.binomial(n, props["negative"])
        draws.append(CityDraw(c, utc, [lt.local_date for lt in local], hour, dow, weather,
                              n, n_social, n_pos, n_neg, props["positive"], props["negative"], rng))
    return draws


def _weather_table(draws: Iterable[CityDraw]) -> WeatherTable:
    table = WeatherTable()
    for d in draws:
        for i in range(len(d.utc_start)):
            key = (d.city.city_id, d.local_date[i], int(d.hour[i]))
            # a repeated local hour (clock set back) keeps its first draw
            table.setdefault(key, WeatherCategory(WEATHER_LEVELS[d.weather[i]]))
    return table


def generate_bins(cfg: GeneratorConfig, events: Sequence[InjectedEvent] = ()):
    """Draw city-hour bins directly, skipping text. Returns ``(bins, weather, draws)``."""
    draws = simulate(cfg, events)
    partial: Dict[tuple, PartialBin] = {}
    for d in draws:
        cid = d.city.city_id
        for i in range(len(d.utc_start)):
            if d.n[i] == 0:
                continue
            b = PartialBin(cid, d.local_date[i], int(d.hour[i]), int(d.dow[i]), int(d.n[i]),
                           int(d.n_pos[i]), int(d.n_neg[i]), int(d.n_social[i]))
            partial[b.key] = merge_partial_bins(partial[b.key], b) if b.key in partial else b
    weather = _weather_table(draws)
    return finalize_bins(partial, weather), weather, draws


def true_coefficients(cfg: GeneratorConfig, model: FittedModel) -> np.ndarray:
    """Generating effects expressed in the model's own parameterization.

    Only meaningful when every factor with nonzero generating effects is in
    the model.
    """
    eff = cfg.effects(model.outcome)
    base = {c.city_id: (c.base_pos if model.outcome == "positive" else c.base_neg)
            for c in cfg.cities}
    hour = list(eff.hour)
    day = list(eff.day)
    weather = dict(zip(WEATHER_LEVELS, eff.weather_vector()))
    lv = model.levels
    ref_city = lv["city"][0] if "city" in lv else None
    intercept = (base[ref_city] if ref_city is not None else np.mean(list(base.values())))
    intercept += hour[lv["hour"][0]] if "hour" in lv else 0.0
    intercept += day[lv["day"][0]] if "day" in lv else 0.0
    intercept += weather[lv["weather"][0]] if "weather" in lv else 0.0
    out = [intercept]
    for name in model.column_names[1:]:
        if name == "social":
            out.append(eff.social_slope)
            continue
        factor, level = name[:-1].split("[", 1)
        if factor == "city":
            out.append(base[level] - base[ref_city])
        elif factor == "hour":
            out.append(hour[int(level)] - hour[lv["hour"][0]])
        elif factor == "day":
            out.append(day[int(level)] - day[lv["day"][0]])
        else:
            out.append(weather[level] - weather[lv["weather"][0]])
    return np.array(out)


# -- text corpus ----------------------------------------------------------------

def _check_vocabulary(lexicon) -> None:
    if lexicon is None:
        return
    from .sentiment import score_text

    for w in POSITIVE_WORDS:
        if score_text(w, lexicon) != (lexicon.terms[w], 1):
            raise ConfigError(f"positive word {w!r} does not score as positive alone")
    for w in NEGATIVE_WORDS:
        if score_text(w, lexicon) != (1, -lexicon.terms[w]):
            raise ConfigError(f"negative word {w!r} does not score as negative alone")
    known = set(lexicon.terms) | set(lexicon.boosters) | set(lexicon.negators)
    clash = known & set(FILLER_WORDS)
    if clash:
        raise ConfigError(f"filler words found in lexicon: {sorted(clash)}")


def _post_lines(d: CityDraw, city_idx: int, seed: int, rng: np.random.Generator):
    """Yield ``(utc, id, json_line)`` for every post drawn for one city."""
    c = d.city
    aliases = list(c.entry().aliases)
    counter = 0
    for i in range(len(d.utc_start)):
        n = int(d.n[i])
        if n == 0:
            continue
        pos = np.zeros(n, bool)
        pos[rng.permutation(n)[: d.n_pos[i]]] = True
        neg = np.zeros(n, bool)
        neg[rng.permutation(n)[: d.n_neg[i]]] = True
        social = np.zeros(n, bool)
        social[rng.permutation(n)[: d.n_social[i]]] = True
        offsets = rng.integers(0, 3600, size=n)
        n_filler = rng.integers(2, 7, size=n)
        kinds = rng.random(n)
        excl = rng.random(n) < 0.2
        for j in range(n):
            words = list(rng.choice(FILLER_WORDS, size=n_filler[j]))
            if pos[j]:
                words.insert(int(rng.integers(0, len(words) + 1)), POSITIVE_WORDS[rng.integers(len(POSITIVE_WORDS))])
            if neg[j]:
                words.insert(int(rng.integers(0, len(words) + 1)), NEGATIVE_WORDS[rng.integers(len(NEGATIVE_WORDS))])
            text = " ".join(words) + ("!" if excl[j] else "")
            is_reply = is_retweet = is_quote = False
            mentions = 0
            if social[j]:
                mentions = 1
                is_reply = kinds[j] < 0.5
                text = f"@friend{rng.integers(1000)} {text}"
            elif kinds[j] < 0.15:
                is_retweet, mentions = True, 1
                text = f"RT @news{rng.integers(100)}: {text}"
            elif kinds[j] < 0.25:
                is_quote = True
                text = f"{text} https://t.co/q{rng.integers(10**6)}"
            t = int(d.utc_start[i] + offsets[j])
            rec_id = f"{seed:x}-{city_idx:03d}-{counter:08d}"
            counter += 1
            rec = {
                "id": rec_id, "created_at": format_timestamp(t), "text": text, "lang": "en",
                "user_location": aliases[int(rng.integers(len(aliases)))],
                "followers": int(rng.integers(0, 5000)),
                "is_reply": bool(is_reply), "is_retweet": bool(is_retweet),
                "is_quote": bool(is_quote), "mentions": mentions,
            }
            yield t, rec_id, json.dumps(rec, separators=(",", ":"))


def _noise_lines(cfg: GeneratorConfig, n_noise: int, rng: np.random.Generator, t_lo: int, t_hi: int):
    kinds = ["language", "follower", "empty_location", "unresolved", "malformed"]
    counts = dict.fromkeys(kinds, 0)
    out = []
    for k in range(n_noise):
        kind = kinds[k % len(kinds)]
        counts[kind] += 1
        t = int(rng.integers(t_lo, t_hi))
        rec_id = f"noise-{k:07d}"
        if kind == "malformed":
            out.append((t, rec_id, '{"id":"' + rec_id + '","created_at":'))
            continue
        rec = {"id": rec_id, "created_at": format_timestamp(t), "text": "hola que tal",
               "lang": "en", "user_location": cfg.cities[k % len(cfg.cities)].entry().aliases[0],
               "followers": 10, "is_reply": False, "is_retweet": False, "is_quote": False,
               "mentions": 0}
        if kind == "language":
            rec["lang"] = "es"
        elif kind == "follower":
            rec["followers"] = 300_000 + int(rng.integers(0, 10**6))
        elif kind == "empty_location":
            rec["user_location"] = ""
        else:
            rec["user_location"] = "Mars, the red planet"
        out.append((t, rec_id, json.dumps(rec, separators=(",", ":"))))
    return out, counts


def generate_corpus(cfg: GeneratorConfig, events: Sequence[InjectedEvent] = (), lexicon=None):
    """Draw posts and return ``(ndjson_lines, manifest, weather_table)``.

    The lines are sorted by ``(timestamp, id)``. Each post's text is built
    from lexicon words so that scoring it reproduces the drawn labels.
    """
    _check_vocabulary(lexicon)
    draws = simulate(cfg, events)
    detail_seeds = np.random.SeedSequence([cfg.seed, 1]).spawn(len(draws) + 1)
    rows = []
    for idx, (d, ss) in enumerate(zip(draws, detail_seeds)):
        rows.extend(_post_lines(d, idx, cfg.seed, np.random.default_rng(ss)))
    n_posts = len(rows)
    noise_counts = {}
    if cfg.noise_fraction > 0 and rows:
        t_lo = min(r[0] for r in rows)
        t_hi = max(r[0] for r in rows) + 1
        noise, noise_counts = _noise_lines(cfg, int(round(cfg.noise_fraction * n_posts)),
                                           np.random.default_rng(detail_seeds[-1]), t_lo, t_hi)
        rows.extend(noise)
    rows.sort(key=lambda r: (r[0], r[1]))
    manifest = build_manifest(cfg, events, draws)
    manifest["records"] = {"posts": n_posts, "noise": noise_counts}
    return [r[2] for r in rows], manifest, _weather_table(draws)


def build_manifest(cfg: GeneratorConfig, events: Sequence[InjectedEvent], draws=None) -> dict:
    truth = {}
    for pol in ("positive", "negative"):
        eff = cfg.effects(pol)
        truth[pol] = {
            "city_base": {c.city_id: (c.base_pos if pol == "positive" else c.base_neg)
                          for c in cfg.cities},
            "hour": list(eff.hour),
            "day": list(eff.day),
            "weather": {w: float(v) for w, v in zip(WEATHER_LEVELS, eff.weather_vector())},
            "social_slope": eff.social_slope,
        }
    doc = {
        "config_hash": cfg.config_hash(),
        "config": cfg.to_json(),
        "ground_truth": truth,
        "events": [ev.to_json() for ev in events],
    }
    if draws is not None:
        doc["bins_drawn"] = int(sum(int(np.count_nonzero(d.n)) for d in draws))
    return doc


def manifest_events(manifest: dict) -> List[InjectedEvent]:
    return [InjectedEvent.from_json(e) for e in manifest.get("events", [])]


# -- evaluation -------------------------------------------------------------------

@dataclass
class DetectionRow:
    label: str
    city_id: str
    polarity: str
    direction: str
    detected: bool
    rank: Optional[int]


@dataclass
class DetectionReport:
    rows: List[DetectionRow]
    top_k: int
    false_alarms: int

    def write_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label", "city_id", "polarity", "direction", "detected", "rank", "top_k",
                    "false_alarms_above_worst"])
        for r in self.rows:
            w.writerow([r.label, r.city_id, r.polarity, r.direction,
                        "true" if r.detected else "false", "" if r.rank is None else r.rank,
                        self.top_k, self.false_alarms])


def _matches(ev: MergedEvent, inj: InjectedEvent) -> bool:
    return (ev.polarity == inj.polarity and ev.direction == inj.direction
            and ev.overlaps(inj.city_id, inj.start, inj.end))


def evaluate_detection(injected: Sequence[InjectedEvent], events: Sequence[MergedEvent],
                       top_k: int = 20) -> DetectionReport:
    """Locate each injected event in the merged ranking.

    False alarms are merged events ranked above the worst-ranked detected
    injected event that match no injected event.
    """
    ranked = sorted(events, key=lambda e: e.rank)
    rows = []
    for inj in injected:
        hit = next((e for e in ranked if _matches(e, inj)), None)
        rank = hit.rank if hit is not None else None
        rows.append(DetectionRow(inj.label, inj.city_id, inj.polarity, inj.direction,
                                 rank is not None and rank <= top_k, rank))
    found = [r.rank for r in rows if r.rank is not None]
    false_alarms = 0
    if found:
        worst = max(found)
        false_alarms = sum(1 for e in ranked if e.rank < worst
                           and not any(_matches(e, inj) for inj in injected))
    return DetectionReport(rows, top_k, false_alarms)


BIAS_CATEGORIES = (("positive", "surplus"), ("negative", "surplus"))


@dataclass
class BiasRow:
    model: str
    polarity: str
    direction: str
    country: str
    events: int
    share: float
    city_share: float
    diff_vs_reference: int
    flagged: bool


def bias_report(events_by_model: Dict[str, Sequence[MergedEvent]], registry: CityRegistry,
                top_k: int = 20, margin: int = 2, reference: Optional[str] = None) -> List[BiasRow]:
    """Per-country share of the top-``top_k`` events under each model.

    A row is flagged when its count differs from the reference model's
    (first model by default) by more than ``margin`` events.
    """
    if reference is None:
        reference = next(iter(events_by_model))
    n_cities = len(registry)
    countries = sorted({e.country for e in registry})
    city_share = {k: sum(1 for e in registry if e.country == k) / n_cities for k in countries}

    def counts(events, pol, direction):
        top = [e for e in sorted(events, key=lambda e: e.rank)
               if e.polarity == pol and e.direction == direction][:top_k]
        out = dict.fromkeys(countries, 0)
        for e in top:
            out[e.country] = out.get(e.country, 0) + 1
        return out, len(top)

    rows = []
    for pol, direction in BIAS_CATEGORIES:
        ref_counts, _ = counts(events_by_model[reference], pol, direction)
        for name, events in events_by_model.items():
            c, total = counts(events, pol, direction)
            for k in countries:
                diff = c[k] - ref_counts[k]
                rows.append(BiasRow(name, pol, direction, k, c[k],
                                    c[k] / total if total else 0.0, city_share[k], diff,
                                    name != reference and abs(diff) > margin))
    return rows


def write_bias_csv(rows: Sequence[BiasRow], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["model", "polarity", "direction", "country", "events", "share", "city_share",
                "diff_vs_reference", "flagged"])
    for r in rows:
        w.writerow([r.model, r.polarity, r.direction, r.country, r.events, f"{r.share:.4f}",
                    f"{r.city_share:.4f}", r.diff_vs_reference, "true" if r.flagged else "false"])
