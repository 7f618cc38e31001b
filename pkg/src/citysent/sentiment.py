"""Dictionary-based dual-polarity scoring of short texts.

Each text gets a positive strength and a negative strength, both on 1..5,
where 1 means nothing of that polarity was found. The rules are a compact
core of the usual lexicon approach:

* a term's strength comes from the lexicon;
* a booster immediately before a term shifts its magnitude by its value;
* an elongated spelling ("loooove") adds one;
* a negator within the two preceding tokens cancels the term;
* a clause ending in "!" adds one to its strongest term.

Interactions never cross clause boundaries (``.``, ``!``, ``?``, ``;``).
"""
from __future__ import annotations

import re
from importlib import resources
from dataclasses import dataclass, field
from functools import cached_property
from typing import Collection, Dict, FrozenSet, List, NamedTuple, Optional

MIN_SCORE, MAX_SCORE = 1, 5

DEFAULT_EMOTICONS = frozenset(
    {":)", ":-)", ":(", ":-(", ":D", ":-D", ";)", ";-)", ":P", ":p", ":-P",
     ":/", ":-/", ":'(", ":|", "<3", "</3", ":o", ":O", "xD", "XD", "=)", "=(",
     ":]", ":[", ":S", ":*"}
)

_URL = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)
_HANDLE = re.compile(r"@\w+")
_TRAILING_TERMINATORS = re.compile(r"[.!?;]+$")
# a word (letters/digits, inner apostrophes) or a run of clause terminators
_PIECE = re.compile(r"([^\W_]+(?:['’][^\W_]+)*)|([.!?;]+)")
_ELONGATED = re.compile(r"([^\W\d_])\1{2,}")


class LexiconError(ValueError):
    pass


@dataclass(frozen=True)
class Lexicon:
    terms: Dict[str, int] = field(default_factory=dict)
    boosters: Dict[str, int] = field(default_factory=dict)
    negators: FrozenSet[str] = frozenset()
    emoticons: Dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        seen: Dict[str, str] = {}
        for role, keys in (("term", self.terms), ("booster", self.boosters),
                           ("negator", self.negators), ("emoticon", self.emoticons)):
            for k in keys:
                if k in seen:
                    raise LexiconError(f"{k!r} appears as both {seen[k]} and {role}")
                seen[k] = role
        for role, table in (("term", self.terms), ("emoticon", self.emoticons)):
            for k, v in table.items():
                if not 2 <= abs(v) <= 5:
                    raise LexiconError(f"{role} {k!r}: strength {v} outside 2..5")
        for k, v in self.boosters.items():
            if v not in (-1, 1):
                raise LexiconError(f"booster {k!r}: value must be +1 or -1, got {v}")

    @cached_property
    def emoticon_set(self) -> FrozenSet[str]:
        return DEFAULT_EMOTICONS | frozenset(self.emoticons)


def load_lexicon(path) -> Lexicon:
    """Read ``term<TAB>role<TAB>value`` lines; ``#`` starts a comment line."""
    terms: Dict[str, int] = {}
    boosters: Dict[str, int] = {}
    negators = set()
    emoticons: Dict[str, int] = {}
    seen: Dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) < 2:
                raise LexiconError(f"line {lineno}: expected term<TAB>role[<TAB>value]")
            term, role = parts[0].strip(), parts[1].strip().lower()
            if role != "emoticon":
                term = term.lower()
            if term in seen:
                raise LexiconError(f"line {lineno}: {term!r} already defined on line {seen[term]}")
            seen[term] = lineno
            if role == "negator":
                negators.add(term)
                continue
            try:
                value = int(parts[2])
            except (IndexError, ValueError):
                raise LexiconError(f"line {lineno}: {role} {term!r} needs an integer value") from None
            if role in ("term", "emoticon"):
                if not 2 <= abs(value) <= 5:
                    raise LexiconError(f"line {lineno}: strength {value} for {term!r} outside 2..5")
                (terms if role == "term" else emoticons)[term] = value
            elif role == "booster":
                if value not in (-1, 1):
                    raise LexiconError(f"line {lineno}: booster {term!r} must be +1 or -1")
                boosters[term] = value
            else:
                raise LexiconError(f"line {lineno}: unknown role {role!r}")
    return Lexicon(terms, boosters, frozenset(negators), emoticons)


class Token(NamedTuple):
    text: str
    elongated: bool = False
    clause: int = 0
    exclaimed: bool = False
    # elongation collapsed to a double letter ("goood" -> "good")
    alt: Optional[str] = None
    emoticon: bool = False


def default_lexicon() -> Lexicon:
    """The lexicon bundled with the package."""
    with resources.as_file(resources.files("citysent.data").joinpath("lexicon.tsv")) as path:
        return load_lexicon(path)


def _emoticon_split(chunk: str, emoticons: Collection[str]):
    """Return (prefix, emoticon) if chunk is or ends with a known emoticon."""
    if chunk in emoticons:
        return "", chunk
    for size in (4, 3, 2):
        tail = chunk[-size:]
        if len(chunk) > size and tail in emoticons:
            return chunk[:-size], tail
    return chunk, None


def tokenize(text: str, emoticons: Optional[Collection[str]] = None) -> List[Token]:
    """Split text into lowercased word tokens and verbatim emoticon tokens.

    URLs and @-handles are dropped. Elongated words are collapsed and
    flagged. Every token of a clause that ends with ``!`` carries
    ``exclaimed=True``.
    """
    emoticons = DEFAULT_EMOTICONS if emoticons is None else emoticons
    raw: List[list] = []  # [text, elongated, clause, alt, emoticon]
    exclaimed_clauses = set()
    clause = 0

    def terminate(run: str) -> None:
        nonlocal clause
        if "!" in run:
            exclaimed_clauses.add(clause)
        clause += 1

    for chunk in text.split():
        if _URL.match(chunk):
            continue
        m = _TRAILING_TERMINATORS.search(chunk)
        # whole-chunk emoticons keep their punctuation
        core, tail = (chunk[: m.start()], m.group()) if m and chunk not in emoticons else (chunk, "")
        prefix, emo = _emoticon_split(core, emoticons)
        prefix = _HANDLE.sub(" ", _URL.sub(" ", prefix))
        for word, term_run in _PIECE.findall(prefix):
            if term_run:
                terminate(term_run)
                continue
            word = word.lower().replace("’", "'")
            elongated = bool(_ELONGATED.search(word))
            alt = None
            if elongated:
                alt = _ELONGATED.sub(r"\1\1", word)
                word = _ELONGATED.sub(r"\1", word)
            raw.append([word, elongated, clause, alt, False])
        if emo is not None:
            raw.append([emo, False, clause, None, True])
        if tail:
            terminate(tail)

    return [
        Token(t, e, c, c in exclaimed_clauses, alt, emo)
        for t, e, c, alt, emo in raw
    ]


class SentimentScore(NamedTuple):
    positive: int = 1
    negative: int = 1


def _base_strength(tok: Token, lex: Lexicon) -> Optional[int]:
    if tok.emoticon:
        return lex.emoticons.get(tok.text)
    s = None
    if tok.alt is not None:
        s = lex.terms.get(tok.alt)
    if s is None:
        s = lex.terms.get(tok.text)
    if s is None:
        s = lex.emoticons.get(tok.text)
    return s


def score_text(text: str, lex: Lexicon) -> SentimentScore:
    tokens = tokenize(text, lex.emoticon_set)
    pos, neg = MIN_SCORE, MIN_SCORE

    clause_terms: Dict[int, List[list]] = {}
    exclaimed = set()
    for i, tok in enumerate(tokens):
        base = _base_strength(tok, lex)
        if base is None:
            continue
        prev = [tokens[j] for j in (i - 1, i - 2) if j >= 0 and tokens[j].clause == tok.clause]
        if any(p.text in lex.negators for p in prev):
            continue
        mag = abs(base)
        if prev and prev[0].text in lex.boosters:
            mag += lex.boosters[prev[0].text]
        if tok.elongated:
            mag += 1
        mag = max(MIN_SCORE, min(MAX_SCORE, mag))
        clause_terms.setdefault(tok.clause, []).append([mag, base > 0])
        if tok.exclaimed:
            exclaimed.add(tok.clause)

    for c, terms in clause_terms.items():
        if c in exclaimed:
            strongest = max(terms, key=lambda t: t[0])
            strongest[0] = min(MAX_SCORE, strongest[0] + 1)
        for mag, positive in terms:
            if positive:
                pos = max(pos, mag)
            else:
                neg = max(neg, mag)
    return SentimentScore(pos, neg)


def polarity_labels(s: SentimentScore):
    """``(is_positive, is_negative)``: a strength of 2 or more counts."""
    return s.positive >= 2, s.negative >= 2
