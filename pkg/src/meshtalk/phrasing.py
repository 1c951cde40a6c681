"""Surface text templates shared by the sequential engine and the router.

Only wording lives here. Goal descriptions feed acknowledgments and
explanations and nothing else; every template has a goal-free fallback so
that deleting all goals changes replies but never behaviour selection.
"""

from __future__ import annotations

from meshtalk.library import Behaviour
from meshtalk.matching import Fill

GOAL_TAGGED = "goal_tagged"
GOAL_FREE = "goal_free"

CLARIFICATION_OPENER = "How can I help?"
FLOOR_OFFER = "Anything else?"


def _goal(mode: str, behaviour: Behaviour) -> str | None:
    if mode == GOAL_TAGGED and behaviour.goal_description:
        return behaviour.goal_description
    return None


def ack_switch(mode: str, behaviour: Behaviour, prompt: str) -> str:
    goal = _goal(mode, behaviour)
    if goal:
        return f"Oh, you want to {goal}. {prompt}".strip()
    return f"okay — {prompt}".strip()


def ack_gated(mode: str, queued: Behaviour, prompt: str) -> str:
    goal = _goal(mode, queued)
    if goal:
        return f"Oh, you want to {goal}. First: {prompt}".strip()
    return f"okay — first: {prompt}".strip()


def ack_deferred(mode: str, queued: Behaviour, prompt: str) -> str:
    goal = _goal(mode, queued)
    if goal:
        return f"We can {goal} after. {prompt}".strip()
    return f"One thing at a time. {prompt}".strip()


def completion_text(mode: str, behaviour: Behaviour) -> str:
    goal = _goal(mode, behaviour)
    if goal:
        return f"All set: {goal}."
    return "All set."


def resumption_text(mode: str, behaviour: Behaviour, prompt: str) -> str:
    goal = _goal(mode, behaviour)
    if goal:
        return f"Now, back to {goal}: {prompt}".strip()
    return f"Back to that: {prompt}".strip()


def dequeued_text(mode: str, behaviour: Behaviour, prompt: str) -> str:
    goal = _goal(mode, behaviour)
    if goal:
        return f"Now: {goal}. {prompt}".strip()
    return f"Now then. {prompt}".strip()


def bump_refusal(mode: str, holder: Behaviour, prompt: str | None) -> str:
    goal = _goal(mode, holder)
    label = goal or holder.id
    text = f"Can we finish {label} first?"
    if prompt:
        text += f" {prompt}"
    return text


def authority_statement(institution: str) -> str:
    return f"You have called {institution}. How can I help?"


def fills_detail(fills: tuple[Fill, ...], triggered: bool) -> str:
    if fills:
        listed = ", ".join(f"{f.slot}={f.value}" for f in fills)
        return f"filled {listed}"
    if triggered:
        return "trigger matched, no slot filled"
    return "repeated already-captured values"
