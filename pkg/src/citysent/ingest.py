"""Parsing and filtering of newline-delimited post records."""
from __future__ import annotations

import dataclasses
import enum
import gzip
import io
import json
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, Iterator, Optional, TextIO

LOG = logging.getLogger(__name__)

DEFAULT_LANGUAGES = frozenset({"en"})
DEFAULT_FOLLOWER_THRESHOLD = 300_000


class ParseError(ValueError):
    """A single input line could not be turned into a record."""


class Interaction(str, enum.Enum):
    BROADCAST = "broadcast"
    SOCIAL = "social"


class DropReason(str, enum.Enum):
    LANGUAGE = "language"
    FOLLOWER_THRESHOLD = "follower_threshold"
    EMPTY_LOCATION = "empty_location"
    OUT_OF_WINDOW = "out_of_window"


@dataclass(frozen=True)
class TweetRecord:
    id: str
    created_at_utc: int
    text: str
    lang: str
    user_location_raw: str = ""
    follower_count: int = 0
    is_reply: bool = False
    is_retweet: bool = False
    is_quote: bool = False
    mention_count: int = 0


@dataclass(frozen=True)
class FilterConfig:
    languages: frozenset = DEFAULT_LANGUAGES
    follower_threshold: int = DEFAULT_FOLLOWER_THRESHOLD
    # [start, end) in UTC epoch seconds; None leaves that side open
    window_start: Optional[int] = None
    window_end: Optional[int] = None


def parse_timestamp(value: str) -> int:
    """ISO-8601 string with a ``Z`` suffix -> integer UTC epoch seconds."""
    if not isinstance(value, str) or not value.endswith("Z"):
        raise ParseError(f"created_at must be ISO-8601 UTC with Z suffix: {value!r}")
    try:
        dt = datetime.fromisoformat(value[:-1])
    except ValueError as exc:
        raise ParseError(f"bad created_at {value!r}") from exc
    if dt.tzinfo is not None:
        raise ParseError(f"created_at carries an offset and a Z suffix: {value!r}")
    return int(dt.replace(tzinfo=timezone.utc).timestamp())


def format_timestamp(epoch: int) -> str:
    return datetime.fromtimestamp(epoch, timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _flag(obj: dict, key: str) -> bool:
    value = obj.get(key, False)
    if value is None:
        return False
    if not isinstance(value, bool):
        raise ParseError(f"{key} must be a boolean, got {value!r}")
    return value


def _count(obj: dict, key: str) -> int:
    value = obj.get(key, 0)
    if value is None:
        return 0
    if isinstance(value, bool) or not isinstance(value, int) or value < 0:
        raise ParseError(f"{key} must be a non-negative integer, got {value!r}")
    return value


def parse_record(line: str) -> TweetRecord:
    """Parse one NDJSON line.

    Missing optional fields take defaults (empty location, false flags, zero
    counts). A record flagged as both retweet and reply is kept as a retweet.
    Raises :class:`ParseError` on anything malformed.
    """
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(str(exc)) from exc
    if not isinstance(obj, dict):
        raise ParseError("record is not a JSON object")

    rec_id = obj.get("id")
    if isinstance(rec_id, int) and not isinstance(rec_id, bool):
        rec_id = str(rec_id)
    if not isinstance(rec_id, str) or not rec_id:
        raise ParseError("missing or empty id")
    if "created_at" not in obj:
        raise ParseError("missing created_at")
    text = obj.get("text")
    if not isinstance(text, str):
        raise ParseError("missing text")
    lang = obj.get("lang") or ""
    location = obj.get("user_location") or ""
    if not isinstance(lang, str) or not isinstance(location, str):
        raise ParseError("lang and user_location must be strings")

    is_retweet = _flag(obj, "is_retweet")
    return TweetRecord(
        id=rec_id,
        created_at_utc=parse_timestamp(obj["created_at"]),
        text=text,
        lang=lang,
        user_location_raw=location,
        follower_count=_count(obj, "followers"),
        is_reply=_flag(obj, "is_reply") and not is_retweet,
        is_retweet=is_retweet,
        is_quote=_flag(obj, "is_quote"),
        mention_count=_count(obj, "mentions"),
    )


def record_to_json(rec: TweetRecord) -> str:
    """Canonical NDJSON line for a record; :func:`parse_record` inverts it."""
    return json.dumps(
        {
            "id": rec.id,
            "created_at": format_timestamp(rec.created_at_utc),
            "text": rec.text,
            "lang": rec.lang,
            "user_location": rec.user_location_raw,
            "followers": rec.follower_count,
            "is_reply": rec.is_reply,
            "is_retweet": rec.is_retweet,
            "is_quote": rec.is_quote,
            "mentions": rec.mention_count,
        },
        ensure_ascii=False,
        separators=(",", ":"),
    )


def classify_interaction(rec: TweetRecord) -> Interaction:
    # precedence: retweet > quote > reply > mention
    if rec.is_retweet or rec.is_quote:
        return Interaction.BROADCAST
    if rec.is_reply or rec.mention_count > 0:
        return Interaction.SOCIAL
    return Interaction.BROADCAST


def filter_record(rec: TweetRecord, cfg: FilterConfig = FilterConfig()) -> Optional[DropReason]:
    """Return ``None`` to keep the record, else the first reason it fails.

    Checks run in a fixed order: language, follower threshold (inclusive),
    empty location, study window.
    """
    if rec.lang not in cfg.languages:
        return DropReason.LANGUAGE
    if rec.follower_count >= cfg.follower_threshold:
        return DropReason.FOLLOWER_THRESHOLD
    if not rec.user_location_raw.strip():
        return DropReason.EMPTY_LOCATION
    if cfg.window_start is not None and rec.created_at_utc < cfg.window_start:
        return DropReason.OUT_OF_WINDOW
    if cfg.window_end is not None and rec.created_at_utc >= cfg.window_end:
        return DropReason.OUT_OF_WINDOW
    return None


@dataclass
class IngestReport:
    """Funnel counters. ``+`` merges reports from separate shards."""

    parsed: int = 0
    kept: int = 0
    dropped_language: int = 0
    dropped_follower: int = 0
    dropped_empty_location: int = 0
    dropped_malformed: int = 0
    dropped_out_of_window: int = 0
    # filled in by later stages
    unresolved_location: int = 0
    unmatched_gazetteer: int = 0
    transient_gazetteer: int = 0
    located: int = 0
    social: int = 0
    positive: int = 0
    negative: int = 0
    extras: dict = field(default_factory=dict)

    _REASON_FIELD = {
        DropReason.LANGUAGE: "dropped_language",
        DropReason.FOLLOWER_THRESHOLD: "dropped_follower",
        DropReason.EMPTY_LOCATION: "dropped_empty_location",
        DropReason.OUT_OF_WINDOW: "dropped_out_of_window",
    }

    def count_drop(self, reason: DropReason) -> None:
        name = self._REASON_FIELD[reason]
        setattr(self, name, getattr(self, name) + 1)

    def __add__(self, other: "IngestReport") -> "IngestReport":
        merged = {}
        for f in dataclasses.fields(self):
            if f.name == "extras":
                extras = dict(self.extras)
                for k, v in other.extras.items():
                    extras[k] = extras.get(k, 0) + v
                merged["extras"] = extras
            else:
                merged[f.name] = getattr(self, f.name) + getattr(other, f.name)
        return IngestReport(**merged)

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            if f.name == "extras":
                continue
            lines.append(f"{f.name}: {getattr(self, f.name)}")
        for k in sorted(self.extras):
            lines.append(f"{k}: {self.extras[k]}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "IngestReport":
        known = {f.name for f in dataclasses.fields(cls)} - {"extras"}
        report = cls()
        for line in text.splitlines():
            if not line.strip():
                continue
            key, _, value = line.partition(":")
            key = key.strip()
            if key in known:
                setattr(report, key, int(value))
            else:
                report.extras[key] = int(value)
        return report


def open_text(path) -> TextIO:
    """Open a UTF-8 text file, transparently gunzipping ``*.gz``."""
    path = str(path)
    if path.endswith(".gz"):
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8")
    return open(path, encoding="utf-8")


def iter_records(
    lines: Iterable[str],
    cfg: FilterConfig = FilterConfig(),
    report: Optional[IngestReport] = None,
) -> Iterator[TweetRecord]:
    """Parse and filter a stream of lines, counting every outcome in ``report``."""
    if report is None:
        report = IngestReport()
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            rec = parse_record(line)
        except ParseError as exc:
            report.dropped_malformed += 1
            LOG.debug("line %d skipped: %s", lineno, exc)
            continue
        report.parsed += 1
        reason = filter_record(rec, cfg)
        if reason is not None:
            report.count_drop(reason)
            continue
        report.kept += 1
        yield rec
