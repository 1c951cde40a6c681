"""Decide what an utterance contributes to a behaviour.

Matching is shallow by design: whitespace tokens with edge punctuation
stripped, literal token sequences or regexes, and gazetteer lookups for
canonical values. All functions here are pure over immutable inputs.
"""

from __future__ import annotations

import re
import string
from dataclasses import dataclass
from datetime import datetime, timedelta

from meshtalk.library import (
    Behaviour,
    FillRule,
    Gazetteer,
    PlanLibrary,
    compile_pattern,
)

USER = "user"
SYSTEM = "system"

_EDGE_PUNCT = string.punctuation
_WEEKDAYS = ["monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday"]
_ISO_DATE = re.compile(r"^\d{4}-\d{2}-\d{2}$")


@dataclass(frozen=True)
class Utterance:
    text: str
    timestamp_ms: int = 0
    speaker: str = USER


@dataclass(frozen=True)
class Fill:
    slot: str
    value: str
    span: tuple[int, int]  # offsets of the whole rule match in the utterance
    rule_id: str


@dataclass(frozen=True)
class MatchResult:
    behaviour_id: str
    fills: tuple[Fill, ...] = ()
    triggered: bool = False

    @property
    def meshes(self) -> bool:
        return self.triggered or bool(self.fills)


@dataclass(frozen=True)
class Token:
    text: str  # case-folded, edge punctuation stripped
    start: int
    end: int


def tokenize(text: str) -> tuple[Token, ...]:
    tokens = []
    for m in re.finditer(r"\S+", text):
        raw, start, end = m.group(0), m.start(), m.end()
        lead = len(raw) - len(raw.lstrip(_EDGE_PUNCT))
        trail = len(raw) - len(raw.rstrip(_EDGE_PUNCT))
        core = raw[lead:len(raw) - trail]
        if core:
            tokens.append(Token(core.casefold(), start + lead, end - trail))
    return tuple(tokens)


def normalize(surface: str, gazetteer: Gazetteer) -> str | None:
    """Case-folded longest-match lookup; None when nothing is found.

    An exact (whole-surface) hit wins; otherwise the longest gazetteer
    surface form contained in the text, on token boundaries, wins — so
    "London Heathrow" beats "London".
    """
    folded = " ".join(t.text for t in tokenize(surface))
    if not folded:
        return None
    if folded in gazetteer.entries:
        return gazetteer.entries[folded]
    padded = f" {folded} "
    for form in gazetteer.surfaces_longest_first():
        if f" {form} " in padded:
            return gazetteer.entries[form]
    return None


def resolve_relative_date(text: str, clock: datetime | None) -> str | None:
    """Resolve "next tuesday" / "tomorrow" / ISO dates against a clock.

    Weekday expressions mean the next occurrence strictly after the clock's
    date. Returns an ISO date string, or None when the expression is not
    recognised (or no clock was injected).
    """
    folded = " ".join(t.text for t in tokenize(text))
    if _ISO_DATE.match(folded):
        return folded
    if clock is None:
        return None
    today = clock.date()
    if folded in ("today", "tonight"):
        return today.isoformat()
    if folded == "tomorrow":
        return (today + timedelta(days=1)).isoformat()
    if folded == "next week":
        return (today + timedelta(days=7)).isoformat()
    m = re.match(r"^(?:next\s+|on\s+|this\s+)?([a-z]+)$", folded)
    if m and m.group(1) in _WEEKDAYS:
        target = _WEEKDAYS.index(m.group(1))
        ahead = (target - today.weekday() - 1) % 7 + 1
        return (today + timedelta(days=ahead)).isoformat()
    return None


def _literal_match(pattern: str, text: str, tokens: tuple[Token, ...]) -> tuple[str, tuple[int, int]] | None:
    want = [t.text for t in tokenize(pattern)]
    if not want:
        return None
    texts = [t.text for t in tokens]
    for i in range(len(texts) - len(want) + 1):
        if texts[i:i + len(want)] == want:
            span = (tokens[i].start, tokens[i + len(want) - 1].end)
            return text[span[0]:span[1]], span
    return None


def _regex_match(rule: FillRule, text: str) -> tuple[str, tuple[int, int]] | None:
    try:
        pattern = compile_pattern(rule.pattern)
    except re.error:
        return None
    m = pattern.search(text)
    if not m:
        return None
    group = rule.capture if rule.capture is not None else (1 if pattern.groups else 0)
    try:
        captured = m.group(group)
    except IndexError:  # capture group out of range for this pattern
        return None
    if captured is None:
        return None
    return captured, m.span(0)


def match_rule(
    rule: FillRule,
    utterance_text: str,
    tokens: tuple[Token, ...],
    gazetteers: dict[str, Gazetteer] | None = None,
    clock: datetime | None = None,
) -> tuple[str, tuple[int, int]] | None:
    """Value and whole-match span if the rule fires on this utterance."""
    if rule.is_regex:
        hit = _regex_match(rule, utterance_text)
    else:
        hit = _literal_match(rule.pattern, utterance_text, tokens)
    if hit is None:
        return None
    surface, span = hit
    if rule.gazetteer == "@date":
        value = resolve_relative_date(surface, clock)
    elif rule.gazetteer is not None:
        gaz = (gazetteers or {}).get(rule.gazetteer)
        value = normalize(surface, gaz) if gaz else None
    else:
        value = surface
    if not value:
        return None
    return value, span


def match_utterance(
    utterance: Utterance,
    behaviour: Behaviour,
    already_filled: frozenset[str] | set[str] = frozenset(),
    *,
    gazetteers: dict[str, Gazetteer] | None = None,
    clock: datetime | None = None,
) -> MatchResult:
    """At most one fill per unfilled slot; first matching rule in slot order wins."""
    if not utterance.text.strip():
        return MatchResult(behaviour_id=behaviour.id)
    tokens = tokenize(utterance.text)
    fills: list[Fill] = []
    for slot in behaviour.slots:
        if slot.name in already_filled:
            continue
        for rule in slot.fill_rules:
            hit = match_rule(rule, utterance.text, tokens, gazetteers, clock)
            if hit is not None:
                value, span = hit
                fills.append(Fill(slot=slot.name, value=value, span=span, rule_id=rule.id))
                break
    triggered = any(
        match_rule(rule, utterance.text, tokens, gazetteers, clock) is not None
        for rule in behaviour.trigger_rules
    )
    return MatchResult(behaviour_id=behaviour.id, fills=tuple(fills), triggered=triggered)


def scan_library(
    utterance: Utterance,
    library: PlanLibrary,
    exclude: frozenset[str] | set[str] = frozenset(),
    *,
    clock: datetime | None = None,
) -> list[MatchResult]:
    """Every non-excluded behaviour the utterance could do something with,
    in library document order; empty when nothing meshes."""
    results = []
    for behaviour in library.behaviours:
        if behaviour.id in exclude:
            continue
        result = match_utterance(
            utterance, behaviour, gazetteers=library.gazetteers, clock=clock
        )
        if result.meshes:
            results.append(result)
    return results
