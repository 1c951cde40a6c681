"""The arbitration loop: commit, check meshing, account for, or sanction.

Every user turn lands in exactly one of three buckets: it advances the
committed behaviour (seen but unnoticed), it advances some other behaviour
in the library (noticed and accounted for, focus switches), or nothing can
account for it and the sanction ladder climbs one rung, ending in
disengagement. Goal descriptions are never consulted for any of this.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from datetime import datetime, timezone

from meshtalk import phrasing
from meshtalk.library import Behaviour, PlanLibrary, lookup
from meshtalk.matching import (
    Fill,
    MatchResult,
    SYSTEM,
    USER,
    Utterance,
    match_utterance,
    scan_library,
)

# Event kinds. The first three are turn classifications (exactly one per
# user turn); the rest accompany them.
UNNOTICED = "unnoticed"
ACCOUNTED_FOR_SWITCH = "accounted_for_switch"
NO_ACCOUNT = "no_account"
TIMEOUT_PROMPT = "timeout_prompt"
COMPLETION = "completion"
SANCTION_STEP = "sanction_step"
DISENGAGE = "disengage"

CLASSIFICATION_KINDS = (UNNOTICED, ACCOUNTED_FOR_SWITCH, NO_ACCOUNT)

ACTIVE = "active"
SUSPENDED = "suspended"
COMPLETED = "completed"
ABANDONED = "abandoned"

SEQUENTIAL = "sequential"
PARALLEL = "parallel"

# Ladder entry marking the rung where the system stops engaging.
DISENGAGE_RUNG = "<disengage>"


class SessionEnded(Exception):
    """The session disengaged; no further turns are accepted."""


class PreconditionFailed(Exception):
    """An operation was called in a state that does not support it."""


@dataclass(frozen=True)
class MeshEvent:
    kind: str
    behaviour_id: str | None = None
    detail: str = ""

    def to_dict(self) -> dict:
        return {"kind": self.kind, "behaviour_id": self.behaviour_id, "detail": self.detail}


@dataclass
class SystemAction:
    utterance: str
    events: list[MeshEvent] = field(default_factory=list)
    effects: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class SanctionPolicy:
    """How unaccountable conduct escalates.

    The ladder is climbed one rung per unaccountable turn; rungs before the
    threshold are soft ("Um..."), the threshold rung calls on the authority
    of the institution, and the final rung always disengages.
    """

    threshold_account_fail: int = 2
    ladder: tuple[str, ...] = ("Um...", phrasing.authority_statement("this service"), DISENGAGE_RUNG)
    authority_statement: str = phrasing.authority_statement("this service")

    @classmethod
    def for_institution(cls, institution: str, threshold: int = 2) -> "SanctionPolicy":
        authority = phrasing.authority_statement(institution)
        soft_rungs = ("Um...",) * max(threshold - 1, 0)
        return cls(
            threshold_account_fail=threshold,
            ladder=soft_rungs + (authority, DISENGAGE_RUNG),
            authority_statement=authority,
        )

    def rung(self, level: int) -> str:
        return self.ladder[min(level, len(self.ladder)) - 1]

    def disengages_at(self, level: int) -> bool:
        return self.rung(level) == DISENGAGE_RUNG


@dataclass
class EngineConfig:
    mode: str = phrasing.GOAL_TAGGED
    modality: str = SEQUENTIAL
    sanction_threshold: int = 2
    institution: str = "this service"
    greeting: str | None = None
    timeout_ms: int = 0
    reference_clock: str = "2024-01-01T00:00Z"
    patience_ms: int = 30_000

    @classmethod
    def from_dict(cls, data: dict) -> "EngineConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def replaced(self, overrides: dict) -> "EngineConfig":
        merged = {**self.to_dict(), **overrides}
        return EngineConfig.from_dict(merged)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "modality": self.modality,
            "sanction_threshold": self.sanction_threshold,
            "institution": self.institution,
            "greeting": self.greeting,
            "timeout_ms": self.timeout_ms,
            "reference_clock": self.reference_clock,
            "patience_ms": self.patience_ms,
        }

    def clock(self) -> datetime:
        raw = self.reference_clock.replace("Z", "+00:00")
        parsed = datetime.fromisoformat(raw)
        if parsed.tzinfo is None:
            parsed = parsed.replace(tzinfo=timezone.utc)
        return parsed

    def sanction_policy(self) -> SanctionPolicy:
        return SanctionPolicy.for_institution(self.institution, self.sanction_threshold)


@dataclass
class BehaviourInstance:
    behaviour_id: str
    filled: dict[str, Fill] = field(default_factory=dict)
    prompt_cursor: dict[str, int] = field(default_factory=dict)
    status: str = ACTIVE
    last_mesh_ms: int = 0

    def filled_slots(self) -> set[str]:
        return set(self.filled)


@dataclass(frozen=True)
class QueuedActivation:
    behaviour_id: str
    fills: tuple[Fill, ...] = ()


@dataclass
class TranscriptEntry:
    speaker: str
    text: str
    timestamp_ms: int
    events: list[MeshEvent] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "speaker": self.speaker,
            "text": self.text,
            "timestamp_ms": self.timestamp_ms,
            "events": [e.to_dict() for e in self.events],
        }


@dataclass
class ConversationState:
    mode: str = phrasing.GOAL_TAGGED
    modality: str = SEQUENTIAL
    focus_stack: list[BehaviourInstance] = field(default_factory=list)
    completed: list[BehaviourInstance] = field(default_factory=list)
    queued: list[QueuedActivation] = field(default_factory=list)
    sanction_level: int = 0
    history: list[TranscriptEntry] = field(default_factory=list)
    pending: list[SystemAction] = field(default_factory=list)
    ended: bool = False
    last_ts: int = 0

    @property
    def focus(self) -> BehaviourInstance | None:
        return self.focus_stack[-1] if self.focus_stack else None

    def completed_ids(self) -> set[str]:
        return {inst.behaviour_id for inst in self.completed}

    def stacked_ids(self) -> set[str]:
        return {inst.behaviour_id for inst in self.focus_stack}


class Engine:
    """Sequential (single-focus) arbitration over a shared plan library."""

    def __init__(self, library: PlanLibrary, config: EngineConfig | None = None):
        self.library = library
        self.config = config or EngineConfig()
        self.policy = self.config.sanction_policy()
        self.clock = self.config.clock()

    # -- session lifecycle ------------------------------------------------

    def start_session(self) -> ConversationState:
        state = ConversationState(mode=self.config.mode, modality=SEQUENTIAL)
        if self.config.greeting:
            action = SystemAction(utterance=self.config.greeting)
            state.pending.append(action)
            state.history.append(TranscriptEntry(SYSTEM, self.config.greeting, 0))
        return state

    # -- turn handling ----------------------------------------------------

    def handle_user_turn(
        self, state: ConversationState, utterance: Utterance
    ) -> tuple[ConversationState, SystemAction]:
        if state.ended:
            raise SessionEnded("session has disengaged")
        state.last_ts = utterance.timestamp_ms
        state.history.append(
            TranscriptEntry(USER, utterance.text, utterance.timestamp_ms)
        )
        events: list[MeshEvent] = []
        effects: list[str] = []

        reply = self._classify_and_respond(state, utterance, events, effects)

        action = SystemAction(utterance=reply, events=events, effects=effects)
        state.history.append(
            TranscriptEntry(SYSTEM, reply, utterance.timestamp_ms, events=list(events))
        )
        return state, action

    def _classify_and_respond(
        self,
        state: ConversationState,
        utterance: Utterance,
        events: list[MeshEvent],
        effects: list[str],
    ) -> str:
        focus = state.focus
        if focus is not None:
            behaviour = lookup(self.library, focus.behaviour_id)
            # Meshing is judged against the behaviour as such (an utterance
            # repeating an already-captured value still meshes); only fills
            # for still-open slots are applied.
            result = match_utterance(
                utterance,
                behaviour,
                gazetteers=self.library.gazetteers,
                clock=self.clock,
            )
            if result.meshes:
                applied = tuple(f for f in result.fills if f.slot not in focus.filled)
                self._apply_fills(focus, applied, utterance.timestamp_ms)
                state.sanction_level = 0
                events.append(
                    MeshEvent(
                        UNNOTICED,
                        behaviour_id=focus.behaviour_id,
                        detail=phrasing.fills_detail(applied, result.triggered),
                    )
                )
                return self._reply_after_mesh(state, events, effects)

        resumed = self._try_resume(state, utterance, events)
        if resumed is not None:
            state.sanction_level = 0
            return self._reply_after_switch(
                state, events, effects, template=phrasing.resumption_text
            )

        candidates = scan_library(
            utterance, self.library, exclude=state.stacked_ids(), clock=self.clock
        )
        if candidates:
            best = self._pick(candidates)
            behaviour = lookup(self.library, best.behaviour_id)
            state.sanction_level = 0
            if self.can_trigger(state, behaviour):
                self._suspend_focus(state)
                self._push_instance(state, behaviour, best.fills, utterance.timestamp_ms)
                events.append(
                    MeshEvent(
                        ACCOUNTED_FOR_SWITCH,
                        behaviour_id=behaviour.id,
                        detail=phrasing.fills_detail(best.fills, best.triggered),
                    )
                )
                return self._reply_after_switch(
                    state, events, effects, template=phrasing.ack_switch
                )
            return self._handle_gated(state, behaviour, best, events, effects)

        return self._sanction(state, utterance, events)

    def _try_resume(
        self, state: ConversationState, utterance: Utterance, events: list[MeshEvent]
    ) -> BehaviourInstance | None:
        # An utterance that advances a suspended behaviour resumes it rather
        # than falling through to sanction; the stack is reordered, never
        # duplicated.
        for idx in range(len(state.focus_stack) - 2, -1, -1):
            inst = state.focus_stack[idx]
            behaviour = lookup(self.library, inst.behaviour_id)
            result = match_utterance(
                utterance,
                behaviour,
                gazetteers=self.library.gazetteers,
                clock=self.clock,
            )
            if result.meshes:
                state.focus_stack.pop(idx)
                self._suspend_focus(state)
                inst.status = ACTIVE
                state.focus_stack.append(inst)
                applied = tuple(f for f in result.fills if f.slot not in inst.filled)
                self._apply_fills(inst, applied, utterance.timestamp_ms)
                events.append(
                    MeshEvent(
                        ACCOUNTED_FOR_SWITCH,
                        behaviour_id=inst.behaviour_id,
                        detail="resumed suspended; "
                        + phrasing.fills_detail(applied, result.triggered),
                    )
                )
                return inst
        return None

    def _handle_gated(
        self,
        state: ConversationState,
        behaviour: Behaviour,
        result: MatchResult,
        events: list[MeshEvent],
        effects: list[str],
    ) -> str:
        if not any(q.behaviour_id == behaviour.id for q in state.queued):
            state.queued.append(QueuedActivation(behaviour.id, result.fills))
        prerequisite = self._deepest_unmet_dependency(state, behaviour)
        if prerequisite.id in state.stacked_ids():
            # Already working on the gate; account for the utterance, defer it.
            events.append(
                MeshEvent(
                    ACCOUNTED_FOR_SWITCH,
                    behaviour_id=behaviour.id,
                    detail=f"gated behind {prerequisite.id}; deferred",
                )
            )
            focus = state.focus
            assert focus is not None
            prompt = self._next_prompt(focus) or phrasing.FLOOR_OFFER
            return phrasing.ack_deferred(state.mode, behaviour, prompt)
        self._suspend_focus(state)
        self._push_instance(state, prerequisite, (), state.last_ts)
        events.append(
            MeshEvent(
                ACCOUNTED_FOR_SWITCH,
                behaviour_id=prerequisite.id,
                detail=f"{behaviour.id} queued behind dependencies; pushed {prerequisite.id}",
            )
        )
        focus = state.focus
        assert focus is not None
        if self._auto_completable(focus):
            return phrasing.ack_gated(
                state.mode, behaviour, self._complete_cascade(state, events, effects)
            )
        prompt = self._next_prompt(focus) or phrasing.FLOOR_OFFER
        return phrasing.ack_gated(state.mode, behaviour, prompt)

    def _sanction(
        self, state: ConversationState, utterance: Utterance, events: list[MeshEvent]
    ) -> str:
        state.sanction_level += 1
        level = state.sanction_level
        events.append(
            MeshEvent(NO_ACCOUNT, detail=f'nothing accounts for "{utterance.text}"')
        )
        events.append(
            MeshEvent(
                SANCTION_STEP,
                detail=f"rung {min(level, len(self.policy.ladder))} of {len(self.policy.ladder)}",
            )
        )
        if self.policy.disengages_at(level):
            events.append(MeshEvent(DISENGAGE, detail="sanction ladder exhausted"))
            state.ended = True
            return ""
        return self.policy.rung(level)

    # -- timeouts and completion -------------------------------------------

    def handle_timeout(
        self, state: ConversationState, now_ms: int | None = None
    ) -> tuple[ConversationState, SystemAction]:
        if state.ended:
            raise SessionEnded("session has disengaged")
        ts = state.last_ts if now_ms is None else now_ms
        state.last_ts = ts
        focus = state.focus
        if focus is None:
            reply = phrasing.CLARIFICATION_OPENER
            event = MeshEvent(TIMEOUT_PROMPT, detail="clarification opener")
        else:
            prompt = self._next_prompt(focus)
            reply = prompt or phrasing.FLOOR_OFFER
            event = MeshEvent(
                TIMEOUT_PROMPT,
                behaviour_id=focus.behaviour_id,
                detail="reprompting focus" if prompt else "nothing left to prompt",
            )
        action = SystemAction(utterance=reply, events=[event])
        state.history.append(TranscriptEntry(SYSTEM, reply, ts, events=[event]))
        return state, action

    def complete_focus(
        self, state: ConversationState
    ) -> tuple[ConversationState, SystemAction]:
        if state.ended:
            raise SessionEnded("session has disengaged")
        focus = state.focus
        if focus is None:
            raise PreconditionFailed("no focused behaviour to complete")
        behaviour = lookup(self.library, focus.behaviour_id)
        missing = [
            s.name for s in behaviour.required_slots if s.name not in focus.filled
        ]
        if missing:
            raise PreconditionFailed(
                f"required slots not filled: {', '.join(missing)}"
            )
        events: list[MeshEvent] = []
        effects: list[str] = []
        reply = self._complete_cascade(state, events, effects)
        action = SystemAction(utterance=reply, events=events, effects=effects)
        state.history.append(
            TranscriptEntry(SYSTEM, reply, state.last_ts, events=list(events))
        )
        return state, action

    # -- inspection ---------------------------------------------------------

    def explain(self, state: ConversationState) -> str:
        if not state.focus_stack:
            return "I am not doing anything yet"
        labels = []
        for inst in reversed(state.focus_stack):
            behaviour = lookup(self.library, inst.behaviour_id)
            if state.mode == phrasing.GOAL_TAGGED and behaviour.goal_description:
                labels.append(behaviour.goal_description)
            else:
                labels.append(behaviour.id)
        if len(labels) == 1:
            return f"I am trying to: {labels[0]}"
        return f"I am trying to: {labels[0]} (then: {', '.join(labels[1:])})"

    def can_trigger(self, state: ConversationState, behaviour: Behaviour) -> bool:
        done = state.completed_ids()
        return all(dep in done for dep in behaviour.dependencies)

    # -- internals ----------------------------------------------------------

    @staticmethod
    def _pick(candidates: list[MatchResult]) -> MatchResult:
        # Most fills wins; library order (scan order) breaks ties.
        best = candidates[0]
        for c in candidates[1:]:
            if len(c.fills) > len(best.fills):
                best = c
        return best

    def _deepest_unmet_dependency(
        self, state: ConversationState, behaviour: Behaviour
    ) -> Behaviour:
        done = state.completed_ids()
        node = behaviour
        while True:
            unmet = next((d for d in node.dependencies if d not in done), None)
            if unmet is None:
                return node
            node = lookup(self.library, unmet)

    @staticmethod
    def _apply_fills(
        instance: BehaviourInstance, fills: tuple[Fill, ...], ts: int
    ) -> None:
        for f in fills:
            if f.slot not in instance.filled:
                instance.filled[f.slot] = f
        instance.last_mesh_ms = ts

    def _suspend_focus(self, state: ConversationState) -> None:
        if state.focus is not None:
            state.focus.status = SUSPENDED

    def _push_instance(
        self,
        state: ConversationState,
        behaviour: Behaviour,
        fills: tuple[Fill, ...],
        ts: int,
    ) -> BehaviourInstance:
        instance = BehaviourInstance(behaviour_id=behaviour.id, last_mesh_ms=ts)
        self._apply_fills(instance, fills, ts)
        state.focus_stack.append(instance)
        return instance

    def _auto_completable(self, instance: BehaviourInstance) -> bool:
        # Behaviours without required slots are open-ended; they only end
        # via explicit completion or abandonment, never on their own.
        behaviour = lookup(self.library, instance.behaviour_id)
        required = behaviour.required_slots
        if not required:
            return False
        return all(s.name in instance.filled for s in required)

    def _next_prompt(self, instance: BehaviourInstance) -> str | None:
        behaviour = lookup(self.library, instance.behaviour_id)
        for want_required in (True, False):
            for slot in behaviour.slots:
                if slot.required is not want_required or not slot.prompts:
                    continue
                if slot.name in instance.filled:
                    continue
                cursor = instance.prompt_cursor.get(slot.name, 0)
                instance.prompt_cursor[slot.name] = cursor + 1
                return slot.prompts[cursor % len(slot.prompts)]
        return None

    def _reply_after_mesh(
        self,
        state: ConversationState,
        events: list[MeshEvent],
        effects: list[str],
    ) -> str:
        focus = state.focus
        assert focus is not None
        if self._auto_completable(focus):
            return self._complete_cascade(state, events, effects)
        prompt = self._next_prompt(focus)
        return prompt if prompt is not None else "Okay."

    def _reply_after_switch(
        self,
        state: ConversationState,
        events: list[MeshEvent],
        effects: list[str],
        template,
    ) -> str:
        focus = state.focus
        assert focus is not None
        behaviour = lookup(self.library, focus.behaviour_id)
        if self._auto_completable(focus):
            tail = self._complete_cascade(state, events, effects)
        else:
            tail = self._next_prompt(focus) or "Okay."
        return template(state.mode, behaviour, tail)

    def _complete_cascade(
        self,
        state: ConversationState,
        events: list[MeshEvent],
        effects: list[str],
    ) -> str:
        parts: list[str] = []
        while True:
            instance = state.focus_stack.pop()
            instance.status = COMPLETED
            state.completed.append(instance)
            behaviour = lookup(self.library, instance.behaviour_id)
            if behaviour.completion_effect:
                effects.append(behaviour.completion_effect)
            events.append(
                MeshEvent(
                    COMPLETION,
                    behaviour_id=behaviour.id,
                    detail=(
                        f"effect={behaviour.completion_effect}"
                        if behaviour.completion_effect
                        else "all required slots filled"
                    ),
                )
            )
            parts.append(phrasing.completion_text(state.mode, behaviour))

            dequeued = self._dequeue_eligible(state)
            if dequeued:
                top = state.focus
                assert top is not None
                if self._auto_completable(top):
                    continue
                top_behaviour = lookup(self.library, top.behaviour_id)
                prompt = self._next_prompt(top) or phrasing.FLOOR_OFFER
                parts.append(phrasing.dequeued_text(state.mode, top_behaviour, prompt))
                break
            if state.focus_stack:
                top = state.focus_stack[-1]
                top.status = ACTIVE
                if self._auto_completable(top):
                    continue
                top_behaviour = lookup(self.library, top.behaviour_id)
                prompt = self._next_prompt(top) or phrasing.FLOOR_OFFER
                parts.append(
                    phrasing.resumption_text(state.mode, top_behaviour, prompt)
                )
                break
            parts.append(phrasing.FLOOR_OFFER)
            break
        return " ".join(parts)

    def _dequeue_eligible(self, state: ConversationState) -> bool:
        eligible = [
            q
            for q in state.queued
            if self.can_trigger(state, lookup(self.library, q.behaviour_id))
        ]
        if not eligible:
            return False
        for q in eligible:
            state.queued.remove(q)
        # Earliest-queued ends up on top so it resumes first.
        for q in reversed(eligible):
            self._suspend_focus(state)
            behaviour = lookup(self.library, q.behaviour_id)
            self._push_instance(state, behaviour, q.fills, state.last_ts)
        return True


def snapshot_payload(state: ConversationState, instances: list[BehaviourInstance] | None = None) -> dict:
    """Wire-format state snapshot; focus (or newest trajectory) first."""
    stack = instances if instances is not None else list(reversed(state.focus_stack))
    return {
        "focus_stack": [
            {
                "behaviour_id": inst.behaviour_id,
                "filled": {slot: fill.value for slot, fill in inst.filled.items()},
                "status": inst.status,
            }
            for inst in stack
        ],
        "sanction_level": state.sanction_level,
        "mode": state.mode,
        "modality": state.modality,
    }


def clone_state(state: ConversationState) -> ConversationState:
    return copy.deepcopy(state)
