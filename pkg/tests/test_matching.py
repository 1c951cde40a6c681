from __future__ import annotations

import random

import pytest
from hypothesis import given, settings, strategies as st

from genlib import random_library, random_turns
from meshtalk.library import Gazetteer, compile_pattern, lookup, parse_library
from meshtalk.matching import (
    Utterance,
    match_utterance,
    normalize,
    resolve_relative_date,
    scan_library,
    tokenize,
)
from oracle import as_comparable, fold_tokens, oracle_scan
from meshtalk.engine import EngineConfig

CLOCK = EngineConfig().clock()  # 2024-01-01T00:00Z, a Monday

AIRPORTS = Gazetteer(
    name="airports",
    entries={"london": "LHE", "london heathrow": "LHE", "paris": "CDG"},
)


def _flight(travel_library):
    return lookup(travel_library, "book_flight")


def test_fly_to_london_fills_destination_and_date(travel_library):
    result = match_utterance(
        Utterance("I want to fly to London next Tuesday"),
        _flight(travel_library),
        gazetteers=travel_library.gazetteers,
        clock=CLOCK,
    )
    by_slot = {f.slot: f for f in result.fills}
    assert by_slot["destination"].value == "LHE"
    # 2024-01-01 is a Monday; the next Tuesday is Jan 2nd (hand-checked).
    assert by_slot["departure_date"].value == "2024-01-02"
    assert result.triggered


def test_cheese_burger_contributes_nothing(travel_library):
    result = match_utterance(
        Utterance("cheese burger"),
        _flight(travel_library),
        gazetteers=travel_library.gazetteers,
        clock=CLOCK,
    )
    assert result.fills == ()
    assert not result.triggered
    assert not result.meshes


def test_empty_utterance_matches_nothing(travel_library):
    for behaviour in travel_library.behaviours:
        result = match_utterance(Utterance(""), behaviour, gazetteers=travel_library.gazetteers)
        assert not result.meshes


def test_already_filled_slots_are_skipped(travel_library):
    result = match_utterance(
        Utterance("fly to London"),
        _flight(travel_library),
        already_filled={"destination"},
        gazetteers=travel_library.gazetteers,
        clock=CLOCK,
    )
    assert all(f.slot != "destination" for f in result.fills)
    assert result.triggered


def test_scan_waldorf_excluding_flight(travel_library):
    results = scan_library(
        Utterance("the Waldorf Hotel"), travel_library, exclude={"book_flight"}, clock=CLOCK
    )
    assert [r.behaviour_id for r in results] == ["book_hotel"]
    assert {f.slot: f.value for f in results[0].fills} == {"hotel_name": "Waldorf"}


def test_scan_cheese_burger_finds_nothing(travel_library):
    assert scan_library(Utterance("cheese burger"), travel_library, clock=CLOCK) == []


def test_scan_empty_library():
    empty = parse_library('{"behaviours": [], "gazetteers": {}}')
    assert scan_library(Utterance("anything at all"), empty) == []


# -- normalize ----------------------------------------------------------------


def test_normalize_basic():
    assert normalize("London", AIRPORTS) == "LHE"
    assert normalize("LONDON", AIRPORTS) == "LHE"
    assert normalize("Narnia", AIRPORTS) is None


def test_normalize_longest_surface_wins():
    gaz = Gazetteer(name="g", entries={"london": "CITY", "london heathrow": "LHE"})
    assert normalize("London Heathrow", gaz) == "LHE"
    assert normalize("flying from London Heathrow today", gaz) == "LHE"
    assert normalize("just London", gaz) == "CITY"


# -- relative dates (hand-checked against the January 2024 calendar) -----------


@pytest.mark.parametrize(
    "text,expected",
    [
        ("today", "2024-01-01"),
        ("tomorrow", "2024-01-02"),
        ("next tuesday", "2024-01-02"),
        ("Tuesday", "2024-01-02"),
        ("on tuesday", "2024-01-02"),
        ("next monday", "2024-01-08"),
        ("monday", "2024-01-08"),
        ("next week", "2024-01-08"),
        ("next sunday", "2024-01-07"),
        ("2024-03-15", "2024-03-15"),
        ("someday", None),
        ("next breakfast", None),
    ],
)
def test_resolve_relative_date(text, expected):
    assert resolve_relative_date(text, CLOCK) == expected


def test_resolve_relative_date_needs_clock():
    assert resolve_relative_date("tomorrow", None) is None
    assert resolve_relative_date("2024-03-15", None) == "2024-03-15"


# -- tokenizer ------------------------------------------------------------------


def test_tokenize_strips_edge_punctuation_and_folds():
    tokens = tokenize("  Hello, World!!  it's fine.")
    assert [t.text for t in tokens] == ["hello", "world", "it's", "fine"]
    text = "  Hello, World!!  it's fine."
    for t in tokens:
        assert text[t.start:t.end].casefold() == t.text


# -- properties -----------------------------------------------------------------


@given(seed=st.integers(min_value=0, max_value=100_000))
@settings(max_examples=60, deadline=None)
def test_scan_matches_bruteforce_oracle(seed):
    rng = random.Random(seed)
    library, vocab = random_library(rng, max_behaviours=10)
    for text in random_turns(rng, vocab, max_turns=5):
        exclude = set(
            rng.sample(library.behaviour_ids(), k=rng.randint(0, len(library.behaviours)))
        )
        got = as_comparable(scan_library(Utterance(text), library, exclude=exclude))
        want = oracle_scan(text, library, exclude)
        assert got == want, f"text={text!r} exclude={exclude}"


@given(seed=st.integers(min_value=0, max_value=100_000))
@settings(max_examples=40, deadline=None)
def test_match_is_deterministic(seed):
    rng = random.Random(seed)
    library, vocab = random_library(rng)
    text = " ".join(rng.choice(vocab) for _ in range(3))
    behaviour = library.behaviours[rng.randrange(len(library.behaviours))]
    first = match_utterance(Utterance(text), behaviour, gazetteers=library.gazetteers)
    second = match_utterance(Utterance(text), behaviour, gazetteers=library.gazetteers)
    assert first == second


@given(seed=st.integers(min_value=0, max_value=100_000))
@settings(max_examples=40, deadline=None)
def test_exclusion_monotonicity(seed):
    rng = random.Random(seed)
    library, vocab = random_library(rng)
    text = " ".join(rng.choice(vocab) for _ in range(3))
    small = set(rng.sample(library.behaviour_ids(), k=rng.randint(0, len(library.behaviours))))
    extra = set(rng.sample(library.behaviour_ids(), k=rng.randint(0, len(library.behaviours))))
    large = small | extra
    results_small = {r.behaviour_id for r in scan_library(Utterance(text), library, exclude=small)}
    results_large = {r.behaviour_id for r in scan_library(Utterance(text), library, exclude=large)}
    assert results_large <= results_small


@given(seed=st.integers(min_value=0, max_value=100_000))
@settings(max_examples=60, deadline=None)
def test_span_validity(seed):
    rng = random.Random(seed)
    library, vocab = random_library(rng)
    for text in random_turns(rng, vocab, max_turns=4):
        for result in scan_library(Utterance(text), library):
            behaviour = lookup(library, result.behaviour_id)
            for fill in result.fills:
                rule = next(
                    r
                    for slot in behaviour.slots
                    if slot.name == fill.slot
                    for r in slot.fill_rules
                    if r.id == fill.rule_id
                )
                sliced = text[fill.span[0]:fill.span[1]]
                if rule.is_regex:
                    assert compile_pattern(rule.pattern).search(sliced), (rule.pattern, sliced)
                else:
                    assert fold_tokens(rule.pattern) == fold_tokens(sliced)
