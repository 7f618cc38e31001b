"""Stage functions shared by the command line and the notebooks in ``demos/``."""
from __future__ import annotations

from collections import Counter
from datetime import date, datetime, timedelta, timezone
from typing import Dict, Iterable, Iterator, List, NamedTuple, Optional, Sequence, Tuple

from .aggregate import CityHourBin, PartialBin, ScoredRecord, WeatherTable, bin_stream, finalize_bins
from .deviation import (DEFAULT_ALPHA, DeviationScore, MergedEvent, _rank_key, merge_events,
                        score_bins)
from .geo import CityRegistry, GazetteerSource, ResolutionCache, localize_timestamp, resolve_location
from .ingest import FilterConfig, IngestReport, Interaction, classify_interaction, iter_records
from .model import DEFAULT_EPSILON, DEFAULT_MIN_BIN_SIZE, OUTCOMES, FactorSpec, FittedModel, fit_model
from .sentiment import Lexicon, polarity_labels, score_text


class Window(NamedTuple):
    """Inclusive range of local calendar dates."""

    start: date
    end: date

    @property
    def days(self) -> int:
        return (self.end - self.start).days + 1

    def __contains__(self, d) -> bool:
        return self.start <= d <= self.end


def utc_bounds(*windows: Window) -> Tuple[int, int]:
    """UTC epoch range wide enough to hold every local hour of the windows.

    Local dates run up to 14 hours ahead of or 12 behind UTC, so the range is
    padded by a day on each side; exact trimming happens on local dates.
    """
    lo = min(w.start for w in windows) - timedelta(days=1)
    hi = max(w.end for w in windows) + timedelta(days=2)
    as_epoch = lambda d: int(datetime(d.year, d.month, d.day, tzinfo=timezone.utc).timestamp())
    return as_epoch(lo), as_epoch(hi)


def scored_records(
    lines: Iterable[str],
    registry: CityRegistry,
    lexicon: Lexicon,
    filter_cfg: FilterConfig = FilterConfig(),
    report: Optional[IngestReport] = None,
    gazetteer: Optional[GazetteerSource] = None,
    cache: Optional[ResolutionCache] = None,
) -> Iterator[ScoredRecord]:
    """Parse, filter, locate, localize and score each line."""
    report = report if report is not None else IngestReport()
    memo: Dict[str, object] = {}
    for rec in iter_records(lines, filter_cfg, report):
        res = memo.get(rec.user_location_raw)
        if res is None:
            res = resolve_location(rec.user_location_raw, registry, gazetteer, cache)
            if res.status != "transient":
                memo[rec.user_location_raw] = res
        if res.city_id is None:
            if res.status == "unmatched":
                report.unmatched_gazetteer += 1
            elif res.status == "transient":
                report.transient_gazetteer += 1
            else:
                report.unresolved_location += 1
            continue
        report.located += 1
        local = localize_timestamp(rec.created_at_utc, registry[res.city_id])
        is_pos, is_neg = polarity_labels(score_text(rec.text, lexicon))
        interaction = classify_interaction(rec)
        report.social += interaction is Interaction.SOCIAL
        report.positive += is_pos
        report.negative += is_neg
        yield ScoredRecord(res.city_id, local, interaction, is_pos, is_neg)


def ingest_to_bins(lines: Iterable[str], registry: CityRegistry, lexicon: Lexicon,
                   weather: Optional[WeatherTable] = None, **kwargs) -> Tuple[List[CityHourBin], IngestReport]:
    report = kwargs.pop("report", None) or IngestReport()
    partial = bin_stream(scored_records(lines, registry, lexicon, report=report, **kwargs))
    return finalize_bins(partial, weather), report


def split_bins(bins: Sequence[CityHourBin], train: Window, test: Window):
    return ([b for b in bins if b.local_date in train],
            [b for b in bins if b.local_date in test])


def fit_outcomes(train: Sequence[CityHourBin], spec: FactorSpec,
                 min_bin_size: int = DEFAULT_MIN_BIN_SIZE,
                 epsilon_clamp: float = DEFAULT_EPSILON) -> Dict[str, FittedModel]:
    return {o: fit_model(train, spec, o, min_bin_size, epsilon_clamp) for o in OUTCOMES}


def score_test_bins(test: Sequence[CityHourBin], models: Dict[str, FittedModel]) -> List[DeviationScore]:
    scores = []
    for outcome in OUTCOMES:
        scores.extend(score_bins(test, models[outcome]))
    return scores


def traversed(scores: Iterable[DeviationScore], alpha: float = DEFAULT_ALPHA,
              depth: Optional[int] = None) -> List[DeviationScore]:
    """Significant scores, optionally only the ``depth`` strongest of them.

    Both polarities share one ranking here, strongest statistic first.
    """
    sig = sorted((s for s in scores if s.eligible and s.p_value < alpha), key=_rank_key)
    return sig if depth is None else sig[:depth]


def detect_events(test: Sequence[CityHourBin], models: Dict[str, FittedModel],
                  registry: CityRegistry, observation_days: float,
                  alpha: float = DEFAULT_ALPHA, depth: Optional[int] = None):
    """Score held-out bins against fitted baselines and merge the deviations.

    Returns ``(scores, events)``.
    """
    scores = score_test_bins(test, models)
    events = merge_events(traversed(scores, alpha, depth), registry, observation_days)
    return scores, events


def compare_models(train: Sequence[CityHourBin], test: Sequence[CityHourBin],
                   specs: Dict[str, FactorSpec], registry: CityRegistry, observation_days: float,
                   min_bin_size: int = DEFAULT_MIN_BIN_SIZE, epsilon_clamp: float = DEFAULT_EPSILON,
                   alpha: float = DEFAULT_ALPHA, depth: Optional[int] = None) -> Dict[str, List[MergedEvent]]:
    """Merged events produced by each named factor specification."""
    out = {}
    for name, spec in specs.items():
        models = fit_outcomes(train, spec, min_bin_size, epsilon_clamp)
        _, out[name] = detect_events(test, models, registry, observation_days, alpha, depth)
    return out


BIAS_MODELS = {
    "full": FactorSpec.full(),
    "no_city": FactorSpec.of("social", "hour", "day", "weather"),
    "null": FactorSpec(),
}


def unseen_levels(models: Dict[str, FittedModel], bins: Sequence[CityHourBin]) -> Counter:
    from .model import predict_raw

    tally: Counter = Counter()
    predict_raw(next(iter(models.values())), bins, tally)
    return tally
