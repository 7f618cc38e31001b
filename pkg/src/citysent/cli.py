"""Command line front end.

    citysent <command> --config CONFIG [--input PATH] [--out-dir DIR] [--seed N] [--top-k N]

Commands: ingest, fit, detect, report, synth, eval, all.
Exit status is 0 on success, 2 for user or configuration errors and 3 when
an internal consistency check fails.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import date, datetime
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from . import __version__
from .aggregate import CityHourBin, WeatherError, load_weather_table, read_bins_csv, write_bins_csv, write_weather_table
from .deviation import (RANKED_HEADER, DeviationScore, MergedEvent, format_recurrence,
                        ranked_table, recurrence_interval, write_deviations_csv, write_events_csv)
from .geo import (CityRegistry, NominatimClient, RecordedGazetteer, RegistryError, ResolutionCache,
                  load_city_registry, write_city_registry)
from .ingest import FilterConfig, IngestReport, open_text
from .model import (OUTCOMES, FactorSpec, FittedModel, ModelError, model_table, predict)
from .pipeline import (BIAS_MODELS, Window, compare_models, detect_events, fit_outcomes,
                       ingest_to_bins, split_bins, utc_bounds)
from .sentiment import LexiconError, default_lexicon, load_lexicon
from .synth import (ConfigError, GeneratorConfig, InjectedEvent, bias_report, evaluate_detection,
                    generate_corpus, manifest_events, write_bias_csv)

LOG = logging.getLogger("citysent")

COMMANDS = ("ingest", "fit", "detect", "report", "synth", "eval", "all")


class UserError(Exception):
    """Bad configuration or missing input; exit status 2."""


class InvariantError(Exception):
    """An internal consistency check failed; exit status 3."""


# -- configuration ------------------------------------------------------------

def _window(value, name: str) -> Window:
    try:
        start, end = (date.fromisoformat(v) for v in value)
    except (TypeError, ValueError):
        raise UserError(f"config field {name!r} must be [start_date, end_date]") from None
    if end < start:
        raise UserError(f"config field {name!r}: end before start")
    return Window(start, end)


@dataclass
class PipelineConfig:
    base_dir: Path
    registry: Path
    input: Optional[Path]
    out_dir: Path
    train_window: Window
    test_window: Window
    lexicon: Optional[Path] = None
    weather: Optional[Path] = None
    cache: Optional[Path] = None
    gazetteer: Optional[dict] = None
    languages: tuple = ("en",)
    follower_threshold: int = 300_000
    min_bin_size: int = 5
    epsilon_clamp: float = 1e-3
    alpha: float = 0.05
    top_k: int = 20
    merge_depth: Optional[int] = 100
    bias_margin: int = 2
    timeline_cities: List[str] = field(default_factory=list)
    synth: Optional[dict] = None
    manifest: Optional[Path] = None
    raw: dict = field(default_factory=dict)

    @property
    def observation_days(self) -> int:
        return self.test_window.days

    @classmethod
    def load(cls, path, overrides: Optional[dict] = None) -> "PipelineConfig":
        path = Path(path)
        if not path.exists():
            raise UserError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise UserError(f"config file {path} is not valid JSON: {exc}") from None
        raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
        base = path.resolve().parent

        def p(key, required=False):
            v = raw.get(key)
            if v is None:
                if required:
                    raise UserError(f"config field {key!r} is required")
                return None
            return (base / v) if not os.path.isabs(str(v)) else Path(v)

        for key in ("train_window", "test_window"):
            if key not in raw:
                raise UserError(f"config field {key!r} is required")
        train = _window(raw["train_window"], "train_window")
        test = _window(raw["test_window"], "test_window")
        if not (train.end < test.start or test.end < train.start):
            raise UserError("config fields 'train_window' and 'test_window' overlap")
        filt = raw.get("filter", {})
        cfg = cls(
            base_dir=base,
            registry=p("registry", required=True),
            input=p("input"),
            out_dir=p("out_dir") or base / "out",
            train_window=train,
            test_window=test,
            lexicon=p("lexicon"),
            weather=p("weather"),
            cache=p("cache"),
            gazetteer=raw.get("gazetteer"),
            languages=tuple(filt.get("languages", ["en"])),
            follower_threshold=int(filt.get("follower_threshold", 300_000)),
            min_bin_size=int(raw.get("min_bin_size", 5)),
            epsilon_clamp=float(raw.get("epsilon_clamp", 1e-3)),
            alpha=float(raw.get("alpha", 0.05)),
            top_k=int(raw.get("top_k", 20)),
            merge_depth=raw.get("merge_depth", 100),
            bias_margin=int(raw.get("bias_margin", 2)),
            timeline_cities=list(raw.get("timeline_cities", [])),
            synth=raw.get("synth"),
            manifest=p("manifest"),
            raw=raw,
        )
        for name, value, ok in (("min_bin_size", cfg.min_bin_size, cfg.min_bin_size >= 1),
                                ("epsilon_clamp", cfg.epsilon_clamp, 0 < cfg.epsilon_clamp < 0.5),
                                ("alpha", cfg.alpha, 0 < cfg.alpha < 1),
                                ("top_k", cfg.top_k, cfg.top_k >= 1)):
            if not ok:
                raise UserError(f"config field {name!r} has invalid value {value!r}")
        if cfg.merge_depth is not None and int(cfg.merge_depth) < 1:
            raise UserError("config field 'merge_depth' must be a positive integer or null")
        return cfg

    def hash(self) -> str:
        # the output location does not change what is computed
        raw = {k: v for k, v in self.raw.items() if k != "out_dir"}
        blob = json.dumps(raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def synth_section(self) -> dict:
        """The ``synth`` section, read from its own file when given as a path."""
        if self.synth is None:
            return {}
        if isinstance(self.synth, str):
            path = _require(self.base_dir / self.synth, "synth config")
            try:
                return json.loads(path.read_text(encoding="utf-8"))
            except json.JSONDecodeError as exc:
                raise UserError(f"synth config {path} is not valid JSON: {exc}") from None
        return self.synth

    def out(self, name: str) -> Path:
        return self.out_dir / name


# -- file helpers -----------------------------------------------------------

@contextmanager
def atomic_write(path: Path):
    """Write through a temp file renamed into place on success."""
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    try:
        with open(tmp, "w", newline="", encoding="utf-8") as fh:
            yield fh
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


def _require(path: Optional[Path], what: str) -> Path:
    if path is None:
        raise UserError(f"no {what} path configured")
    if not path.exists():
        raise UserError(f"{what} not found: {path}")
    return path


def _digest(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _rel(path: Path, base: Path) -> str:
    """Path relative to ``base`` so manifests do not depend on where a run lives."""
    return Path(os.path.relpath(Path(path).resolve(), Path(base).resolve())).as_posix()


class Run:
    """Tracks inputs and outputs of one invocation for the run manifest."""

    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.inputs: Dict[str, str] = {}
        self.outputs: List[str] = []
        self.commands: List[str] = []

    def used(self, path: Path) -> Path:
        out = Path(self.cfg.out_dir).resolve()
        if out in Path(path).resolve().parents:
            key = "out/" + _rel(path, out)
        else:
            key = _rel(path, self.cfg.base_dir)
        self.inputs[key] = _digest(path)
        return path

    def wrote(self, path: Path) -> None:
        self.outputs.append(_rel(path, self.cfg.out_dir))

    def write_manifest(self) -> None:
        doc = {"version": __version__, "commands": self.commands, "config_hash": self.cfg.hash(),
               "inputs": dict(sorted(self.inputs.items())), "outputs": sorted(set(self.outputs))}
        path = self.cfg.out("run_manifest.json")
        with atomic_write(path) as fh:
            json.dump(doc, fh, indent=1)
            fh.write("\n")


def _registry(run: Run) -> CityRegistry:
    return load_city_registry(run.used(_require(run.cfg.registry, "registry")))


def _lexicon(run: Run):
    if run.cfg.lexicon is None:
        return default_lexicon()
    return load_lexicon(run.used(_require(run.cfg.lexicon, "lexicon")))


def _read_bins(run: Run) -> List[CityHourBin]:
    path = _require(run.cfg.out("bins.csv"), "bins file (run `ingest` first)")
    with open(run.used(path), newline="", encoding="utf-8") as fh:
        return read_bins_csv(fh)


def _read_models(run: Run) -> Dict[str, FittedModel]:
    models = {}
    for outcome in OUTCOMES:
        path = _require(run.cfg.out(f"model_{outcome}.json"), "model file (run `fit` first)")
        models[outcome] = FittedModel.from_json(run.used(path).read_text(encoding="utf-8"))
    return models


def _split(run: Run, bins):
    train, test = split_bins(bins, run.cfg.train_window, run.cfg.test_window)
    if not train:
        raise UserError("no bins fall inside train_window")
    if not test:
        raise UserError("no bins fall inside test_window")
    return train, test


# -- commands ---------------------------------------------------------------

def cmd_ingest(run: Run) -> None:
    cfg = run.cfg
    registry = _registry(run)
    lexicon = _lexicon(run)
    weather = load_weather_table(run.used(cfg.weather)) if cfg.weather and cfg.weather.exists() else None
    if cfg.weather is not None and weather is None:
        raise UserError(f"weather table not found: {cfg.weather}")
    gazetteer = None
    if cfg.gazetteer:
        if "recorded" in cfg.gazetteer:
            gazetteer = RecordedGazetteer.from_file(run.used(_require(cfg.base_dir / cfg.gazetteer["recorded"], "recorded gazetteer")))
        elif "endpoint" in cfg.gazetteer:
            gazetteer = NominatimClient(cfg.gazetteer["endpoint"], cfg.gazetteer.get("user_agent", ""),
                                        float(cfg.gazetteer.get("rate_limit", 1.0)))
        else:
            raise UserError("config field 'gazetteer' needs 'recorded' or 'endpoint'")
    cache = ResolutionCache.load(cfg.cache) if cfg.cache else None
    lo, hi = utc_bounds(cfg.train_window, cfg.test_window)
    filt = FilterConfig(frozenset(cfg.languages), cfg.follower_threshold, lo, hi)
    input_path = run.used(_require(cfg.input, "input"))
    report = IngestReport()
    with open_text(input_path) as fh:
        bins, report = ingest_to_bins(fh, registry, lexicon, weather, filter_cfg=filt,
                                      report=report, gazetteer=gazetteer, cache=cache)
    if sum(b.n_total for b in bins) != report.located:
        raise InvariantError("bin totals do not match the number of located records")
    with atomic_write(cfg.out("bins.csv")) as fh:
        write_bins_csv(bins, fh)
    with atomic_write(cfg.out("ingest_report.txt")) as fh:
        fh.write(report.to_text())
    if cache is not None:
        cache.save(cfg.cache)
    run.wrote(cfg.out("bins.csv"))
    run.wrote(cfg.out("ingest_report.txt"))
    LOG.info("ingest: %d kept of %d parsed, %d bins", report.kept, report.parsed, len(bins))


def _fmt_corr(c) -> List[str]:
    if c is None:
        return ["", "", ""]
    return [f"{c.r:.3f}", f"{c.ci_low:.3f}", f"{c.ci_high:.3f}"]


def cmd_fit(run: Run) -> None:
    cfg = run.cfg
    bins = _read_bins(run)
    train, test = _split(run, bins)
    models = fit_outcomes(train, FactorSpec.full(), cfg.min_bin_size, cfg.epsilon_clamp)
    for outcome, m in models.items():
        path = cfg.out(f"model_{outcome}.json")
        with atomic_write(path) as fh:
            fh.write(m.to_json())
        run.wrote(path)
    path = cfg.out("model_table.csv")
    with atomic_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["outcome", "factors", "n_coefficients", "n_significant", "r_squared_pct",
                    "pearson_r", "ci_low", "ci_high"])
        for outcome in OUTCOMES:
            for row in model_table(train, test, outcome, min_bin_size=cfg.min_bin_size,
                                   epsilon_clamp=cfg.epsilon_clamp):
                w.writerow([outcome, row.label, row.n_coefficients, row.n_significant,
                            f"{row.r_squared_pct:.3f}", *_fmt_corr(row.correlation)])
    run.wrote(path)


def _detect(run: Run, bins=None, models=None, registry=None):
    cfg = run.cfg
    models = models or _read_models(run)
    bins = bins if bins is not None else _read_bins(run)
    registry = registry or _registry(run)
    _, test = _split(run, bins)
    scores, events = detect_events(test, models, registry, cfg.observation_days, cfg.alpha,
                                   None if cfg.merge_depth is None else int(cfg.merge_depth))
    return test, scores, events, registry, models


def cmd_detect(run: Run) -> None:
    cfg = run.cfg
    # models first so a missing model is reported before anything else is read
    models = _read_models(run)
    _, scores, events, _, _ = _detect(run, models=models)
    D = cfg.observation_days
    outputs = {
        "deviations.csv": lambda fh: write_deviations_csv(scores, fh),
        "events.csv": lambda fh: write_events_csv(events, fh, D),
    }
    for pol in OUTCOMES:
        def ranked(fh, pol=pol):
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(RANKED_HEADER)
            w.writerows(ranked_table(scores, pol, D, cfg.alpha))
        outputs[f"ranked_{pol}.csv"] = ranked
    for name, writer in outputs.items():
        with atomic_write(cfg.out(name)) as fh:
            writer(fh)
        run.wrote(cfg.out(name))


# -- reports ------------------------------------------------------------------

def _pct(num: float, den: float) -> str:
    return f"{100.0 * num / den:.1f}%" if den else ""


def _date_text(d: date) -> str:
    return f"{d.day} {d.strftime('%B')} {d.year}"


def _span_text(dates: Sequence[date]) -> str:
    a, b = min(dates), max(dates)
    if a == b:
        return _date_text(a)
    if (a.year, a.month) == (b.year, b.month):
        return f"{a.day}-{b.day} {b.strftime('%B')} {b.year}"
    if a.year == b.year:
        return f"{a.day} {a.strftime('%B')} - {b.day} {b.strftime('%B')} {b.year}"
    return f"{_date_text(a)} - {_date_text(b)}"


def _hour_text(h: int) -> str:
    suffix = "am" if h < 12 else "pm"
    return f"{(h % 12) or 12} {suffix}"


def describe_event(ev: MergedEvent, registry: Optional[CityRegistry] = None) -> str:
    """Human-readable time and place, e.g. ``25-27 November 2017 in Manila``."""
    def city_name(cid):
        return registry[cid].display_name if registry is not None and cid in registry else cid

    cities = ev.cities
    place = city_name(cities[0]) if len(cities) == 1 else f"multiple {ev.country} cities"
    when = _span_text(ev.dates)
    if ev.scope == "country_hour":
        when = f"{_hour_text(ev.members[0].hour)}, {when}"
    return f"{when} in {place}"


EVENT_REPORT_HEADER = ["rank", "time_and_location", "polarity", "direction",
                       "negative_pct_observed_expected", "positive_pct_observed_expected",
                       "recurrence_interval", "label"]


def emit_event_report(events: Sequence[MergedEvent], observation_days: float, fh,
                      scores: Sequence[DeviationScore] = (), registry: Optional[CityRegistry] = None,
                      labels: Optional[Dict[int, str]] = None) -> None:
    """Ranked events as ``observed% (expected%)`` for both polarities.

    ``scores`` supplies the other polarity's counts for each member bin;
    without it only the event's own polarity column is filled.
    """
    by_key = {(s.key, s.polarity): s for s in scores}
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(EVENT_REPORT_HEADER)
    for ev in events:
        cells = {}
        for pol in ("negative", "positive"):
            members = [by_key.get((m.key, pol)) for m in ev.members] if by_key else []
            if pol == ev.polarity and not all(members):
                members = ev.members
            members = [m for m in members if m is not None]
            if not members:
                cells[pol] = ""
                continue
            n = sum(m.n_total for m in members)
            o = sum(m.observed for m in members)
            e = sum(m.expected for m in members)
            cells[pol] = f"{_pct(o, n)} ({_pct(e, n)})"
        ri = ev.recurrence if ev.recurrence is not None else recurrence_interval(ev.rank, observation_days)
        w.writerow([ev.rank, describe_event(ev, registry), ev.polarity, ev.direction,
                    cells["negative"], cells["positive"], format_recurrence(ri),
                    (labels or {}).get(ev.rank, "")])


TIMELINE_HEADER = ["city_id", "local_date", "hour", "n_total",
                   "expected_pos", "observed_pos", "statistic_pos", "direction_pos",
                   "expected_neg", "observed_neg", "statistic_neg", "direction_neg"]


def _num(x: float) -> str:
    return f"{x:.10g}"


def export_city_timeline(city_id: str, bins: Sequence[CityHourBin], models: Dict[str, FittedModel],
                         scores: Sequence[DeviationScore], fh) -> int:
    """Hourly expected vs observed counts for one city; returns the row count."""
    mine = [b for b in bins if b.city_id == city_id]
    if not mine:
        raise UserError(f"city {city_id!r} has no bins in the test window")
    by_key = {(s.key, s.polarity): s for s in scores}
    preds = {o: predict(models[o], mine) for o in OUTCOMES}
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(TIMELINE_HEADER)
    for i, b in enumerate(mine):
        row = [b.city_id, b.local_date.isoformat(), b.hour, b.n_total]
        for o in OUTCOMES:
            s = by_key.get((b.key, o))
            stat = s.statistic if s is not None else 0.0
            direction = s.direction if s is not None and stat > 0 else "none"
            row += [_num(preds[o][i] * b.n_total), b.labeled(o), _num(stat), direction]
        w.writerow(row)
    return len(mine)


def cmd_report(run: Run) -> None:
    cfg = run.cfg
    models = _read_models(run)
    bins = _read_bins(run)
    test, scores, events, registry, _ = _detect(run, bins=bins, models=models)
    path = cfg.out("event_report.csv")
    with atomic_write(path) as fh:
        emit_event_report(events, cfg.observation_days, fh, scores, registry)
    run.wrote(path)
    for city in cfg.timeline_cities:
        if city not in registry:
            raise UserError(f"timeline city {city!r} is not in the registry")
        path = cfg.out(f"timeline_{city}.csv")
        with atomic_write(path) as fh:
            export_city_timeline(city, test, models, scores, fh)
        run.wrote(path)
    train, _ = _split(run, bins)
    by_model = compare_models(train, test, BIAS_MODELS, registry, cfg.observation_days,
                              cfg.min_bin_size, cfg.epsilon_clamp, cfg.alpha,
                              None if cfg.merge_depth is None else int(cfg.merge_depth))
    path = cfg.out("bias_report.csv")
    with atomic_write(path) as fh:
        write_bias_csv(bias_report(by_model, registry, cfg.top_k, cfg.bias_margin), fh)
    run.wrote(path)
    for name, evs in by_model.items():
        path = cfg.out(f"events_{name}.csv")
        with atomic_write(path) as fh:
            write_events_csv(evs, fh, cfg.observation_days)
        run.wrote(path)


def _synth_config(cfg: PipelineConfig, seed: Optional[int]):
    if not cfg.synth:
        raise UserError("config has no 'synth' section")
    try:
        gen = GeneratorConfig.from_json(cfg.synth_section()["generator"])
        if seed is not None:
            gen.seed = seed
        events = [InjectedEvent.from_json(e) for e in cfg.synth_section().get("events", [])]
    except (KeyError, TypeError, ValueError) as exc:
        raise UserError(f"config field 'synth' is invalid: {exc}") from None
    return gen, events


def cmd_synth(run: Run, seed: Optional[int] = None) -> None:
    cfg = run.cfg
    gen, events = _synth_config(cfg, seed)
    out = cfg.out_dir / cfg.synth_section().get("out", "synth")
    lexicon = _lexicon(run)
    lines, manifest, weather = generate_corpus(gen, events, lexicon)
    targets = {"tweets.ndjson": lambda fh: fh.writelines(l + "\n" for l in lines),
               "manifest.json": lambda fh: fh.write(json.dumps(manifest, indent=1, sort_keys=True) + "\n"),
               "weather.csv": lambda fh: write_weather_table(weather, fh)}
    for name, writer in targets.items():
        with atomic_write(out / name) as fh:
            writer(fh)
        run.wrote(out / name)
    reg_path = out / "registry.csv"
    write_city_registry(gen.registry(), reg_path)
    run.wrote(reg_path)


def cmd_eval(run: Run) -> None:
    cfg = run.cfg
    manifest_path = cfg.manifest or (cfg.out_dir / cfg.synth_section().get("out", "synth") / "manifest.json")
    manifest = json.loads(run.used(_require(manifest_path, "ground-truth manifest")).read_text("utf-8"))
    _, _, events, _, _ = _detect(run)
    report = evaluate_detection(manifest_events(manifest), events, cfg.top_k)
    path = cfg.out("detection_report.csv")
    with atomic_write(path) as fh:
        report.write_csv(fh)
    run.wrote(path)


def run(command: str, cfg: PipelineConfig, seed: Optional[int] = None) -> None:
    r = Run(cfg)
    steps = ["ingest", "fit", "detect", "report"] if command == "all" else [command]
    if command == "all" and (cfg.manifest is not None):
        steps.append("eval")
    handlers = {"ingest": cmd_ingest, "fit": cmd_fit, "detect": cmd_detect, "report": cmd_report,
                "eval": cmd_eval, "synth": lambda rr: cmd_synth(rr, seed)}
    for step in steps:
        r.commands.append(step)
        handlers[step](r)
    r.write_manifest()


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="citysent", description=__doc__.split("\n")[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="pipeline config JSON")
    ap.add_argument("--input", help="override the input NDJSON path")
    ap.add_argument("--out-dir", help="override the output directory")
    ap.add_argument("--seed", type=int, help="override the generator seed (synth)")
    ap.add_argument("--top-k", type=int, help="override top_k")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {"top_k": args.top_k}
    # flag paths are relative to the working directory, not the config file
    if args.input:
        overrides["input"] = os.path.abspath(args.input)
    if args.out_dir:
        overrides["out_dir"] = os.path.abspath(args.out_dir)
    try:
        cfg = PipelineConfig.load(args.config, overrides)
        run(args.command, cfg, args.seed)
    except (UserError, ConfigError, RegistryError, LexiconError, WeatherError, ModelError) as exc:
        print(f"citysent: error: {exc}", file=sys.stderr)
        return 2
    except InvariantError as exc:
        print(f"citysent: internal error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
