"""Acceptance criteria, one test per criterion, zero tolerance where stated.

Each test prints a PASS line (run with -s or -v to see them); a failure
anywhere fails the suite.
"""

from __future__ import annotations

import random

from genlib import random_library, random_turns
from meshtalk.engine import (
    ACCOUNTED_FOR_SWITCH,
    COMPLETION,
    DISENGAGE,
    Engine,
    EngineConfig,
    NO_ACCOUNT,
    SANCTION_STEP,
    UNNOTICED,
)
from meshtalk.harness import (
    golden_path_for,
    load_script,
    run_scenario,
    run_suite,
    transcript_lines,
)
from meshtalk.library import lookup, strip_goals
from meshtalk.matching import Utterance, match_utterance, scan_library
from meshtalk.trajectories import TrajectoryRouter
from oracle import as_comparable, oracle_scan


def _events(library, config, turns):
    """(kind, behaviour_id) stream for a turn sequence, stopping at disengage."""
    engine = Engine(library, config)
    state = engine.start_session()
    stream = []
    for i, text in enumerate(turns):
        if state.ended:
            break
        state, action = engine.handle_user_turn(state, Utterance(text, (i + 1) * 1000))
        stream.extend((e.kind, e.behaviour_id) for e in action.events)
    return stream


def test_accept_waldorf_switch(scenarios_dir):
    script = load_script(scenarios_dir / "waldorf.script.json")
    result = run_scenario(script)
    assert result.passed, result.failures
    kinds = [(e.kind, e.behaviour_id) for e in result.events]
    assert (ACCOUNTED_FOR_SWITCH, "book_hotel") in kinds
    switch_turn = next(
        entry for entry in result.transcript
        if any(e.kind == ACCOUNTED_FOR_SWITCH and e.behaviour_id == "book_hotel" for e in entry.events)
    )
    assert switch_turn.text.startswith("Oh, you want to")
    golden = golden_path_for(scenarios_dir / "waldorf.script.json")
    assert golden.read_text(encoding="utf-8") == "\n".join(transcript_lines(result)) + "\n"
    again = run_scenario(script)
    assert transcript_lines(again) == transcript_lines(result)
    print("\nACCEPT waldorf-switch: PASS")


def test_accept_cheese_burger_sanction(travel_library):
    engine = Engine(travel_library, EngineConfig(institution="Acme Travel"))
    state = engine.start_session()
    state, _ = engine.handle_user_turn(
        state, Utterance("I want to fly to London next Tuesday", 1000)
    )
    stream = []
    replies = []
    for i, text in enumerate(["cheese burger", "make it a double", "and fries"]):
        state, action = engine.handle_user_turn(state, Utterance(text, (i + 2) * 1000))
        stream.extend(e.kind for e in action.events)
        replies.append(action.utterance)
    assert stream == [
        NO_ACCOUNT, SANCTION_STEP,
        NO_ACCOUNT, SANCTION_STEP,
        NO_ACCOUNT, SANCTION_STEP, DISENGAGE,
    ]
    assert replies[0] == "Um..."
    assert replies[1] == "You have called Acme Travel. How can I help?"
    assert state.ended
    print("\nACCEPT cheese-burger-sanction: PASS")


def test_accept_mother_child_gating(scenarios_dir, homework_library):
    script = load_script(scenarios_dir / "mother_child.script.json")
    result = run_scenario(script)
    assert result.passed, result.failures
    order = [(e.kind, e.behaviour_id) for e in result.events]
    assert order == [
        (ACCOUNTED_FOR_SWITCH, "check_homework"),  # eat_snack trigger-queued, gate pushed
        (UNNOTICED, "check_homework"),
        (ACCOUNTED_FOR_SWITCH, "eat_snack"),       # mid-quiz food talk deferred
        (UNNOTICED, "check_homework"),
        (UNNOTICED, "check_homework"),
        (COMPLETION, "check_homework"),            # gate satisfied; eating dequeues
        (UNNOTICED, "eat_snack"),
        (COMPLETION, "eat_snack"),
    ]
    assert "eat_snack queued" in result.events[0].detail

    # Zero semantic overlap: quiz answers advance nothing in eat_snack and
    # the snack answer advances nothing in check_homework.
    eat = lookup(homework_library, "eat_snack")
    homework = lookup(homework_library, "check_homework")
    for quiz_answer in ["Yeah", "It's Brasilia", "Caracas"]:
        assert not match_utterance(Utterance(quiz_answer), eat).meshes
    assert not match_utterance(Utterance("Sure"), homework).meshes
    print("\nACCEPT mother-child-gating: PASS")


def test_accept_goal_free_equivalence():
    scenarios = 500
    for seed in range(scenarios):
        rng = random.Random(seed)
        library, vocab = random_library(rng, max_behaviours=8)
        turns = random_turns(rng, vocab, max_turns=20)
        tagged = _events(library, EngineConfig(mode="goal_tagged"), turns)
        free = _events(strip_goals(library), EngineConfig(mode="goal_free"), turns)
        assert tagged == free, f"seed {seed} diverged"
    print(f"\nACCEPT goal-free-equivalence: PASS ({scenarios} scenarios, 0 diverged)")


def test_accept_matcher_oracle_equivalence():
    instances = 0
    seed = 0
    while instances < 1000:
        rng = random.Random(10_000 + seed)
        seed += 1
        library, vocab = random_library(rng, max_behaviours=10)
        for text in random_turns(rng, vocab, max_turns=4):
            exclude = set(
                rng.sample(library.behaviour_ids(), k=rng.randint(0, len(library.behaviours)))
            )
            got = as_comparable(scan_library(Utterance(text), library, exclude=exclude))
            want = oracle_scan(text, library, exclude)
            assert got == want, f"instance {instances}: text={text!r}"
            instances += 1
            if instances >= 1000:
                break
    print(f"\nACCEPT matcher-oracle-equivalence: PASS ({instances} instances exact)")


def test_accept_parallel_trajectories(scenarios_dir):
    lovers = run_scenario(load_script(scenarios_dir / "lovers_chat.script.json"))
    assert lovers.passed, lovers.failures
    last_turn_events = lovers.transcript[-1].events
    assert [(e.kind, e.behaviour_id) for e in last_turn_events] == [
        (UNNOTICED, "banter"),
        (UNNOTICED, "sick_aunt_talk"),
    ]

    bump = run_scenario(load_script(scenarios_dir / "bump.script.json"))
    assert bump.passed, bump.failures
    refusal = next(e for e in bump.events if "refused" in e.detail)
    assert refusal.behaviour_id == "video_game"
    assert "practice_piano holds it" in refusal.detail
    refusal_reply = bump.transcript[-1].text
    assert "practice the piano" in refusal_reply
    print("\nACCEPT parallel-trajectories: PASS")


def test_accept_sequential_degeneracy():
    scenarios = 200
    for seed in range(scenarios):
        rng = random.Random(50_000 + seed)
        library, vocab = random_library(rng, global_resource="floor")
        steps = [
            None if rng.random() < 0.1 else text
            for text in random_turns(rng, vocab, max_turns=15)
        ]
        engine_stream = _drive_stream(Engine(library, EngineConfig()), steps)
        router_stream = _drive_stream(
            TrajectoryRouter(library, EngineConfig(modality="sequential")), steps
        )
        assert engine_stream == router_stream, f"seed {seed} diverged"
    print(f"\nACCEPT sequential-degeneracy: PASS ({scenarios} scenarios, 0 diverged)")


def _drive_stream(processor, steps):
    state = processor.start_session()
    stream = []
    for i, step in enumerate(steps):
        if state.ended:
            break
        if step is None:
            state, action = processor.handle_timeout(state, now_ms=(i + 1) * 1000)
        else:
            state, action = processor.handle_user_turn(state, Utterance(step, (i + 1) * 1000))
        stream.append(
            (
                action.utterance,
                tuple((e.kind, e.behaviour_id, e.detail) for e in action.events),
                tuple(action.effects),
            )
        )
    return stream


def test_accept_determinism(scenarios_dir):
    summary = run_suite(scenarios_dir)
    assert summary.failed == {}, summary.failed
    for script_path in sorted(scenarios_dir.glob("*.script.json")):
        script = load_script(script_path)
        first = run_scenario(script)
        second = run_scenario(script)
        assert transcript_lines(first) == transcript_lines(second), script.name
        assert [e.to_dict() for e in first.events] == [e.to_dict() for e in second.events]
    print(f"\nACCEPT determinism: PASS ({len(summary.passed)} fixtures byte-stable)")
