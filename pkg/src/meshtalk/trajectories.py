"""Parallel trajectories: several live behaviours, bump detection, abandonment.

Chat modality lets multiple conversational trajectories run at once; each
segment of a turn is attributed to the first live trajectory it meshes with.
Two trajectories that need the same resource "bump": in parallel modality the
later activation is refused, in sequential modality every activation bumps
the floor-holder and resolves by suspension, which degenerates to exactly the
single-focus stack semantics of the engine (and is tested against it).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from meshtalk import phrasing
from meshtalk.engine import (
    ABANDONED,
    ACCOUNTED_FOR_SWITCH,
    ACTIVE,
    COMPLETION,
    COMPLETED,
    DISENGAGE,
    NO_ACCOUNT,
    PARALLEL,
    SANCTION_STEP,
    SEQUENTIAL,
    SUSPENDED,
    TIMEOUT_PROMPT,
    UNNOTICED,
    BehaviourInstance,
    EngineConfig,
    MeshEvent,
    QueuedActivation,
    SessionEnded,
    SystemAction,
    TranscriptEntry,
)
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

_SEGMENT_BREAK = re.compile(r"[.!?\n]+")


@dataclass(frozen=True)
class BumpEvent:
    a: str  # behaviour already holding the resource
    b: str  # behaviour whose activation collided
    resource: str


@dataclass
class TrajectorySet:
    active: list[BehaviourInstance] = field(default_factory=list)
    abandoned: list[tuple[BehaviourInstance, str]] = field(default_factory=list)
    completed: list[BehaviourInstance] = field(default_factory=list)
    queued: list[QueuedActivation] = field(default_factory=list)

    def active_ids(self) -> set[str]:
        return {inst.behaviour_id for inst in self.active}

    def completed_ids(self) -> set[str]:
        return {inst.behaviour_id for inst in self.completed}


def segment_turn(text: str) -> list[str]:
    """Split a turn into independently routable moves."""
    parts = [p.strip() for p in _SEGMENT_BREAK.split(text)]
    return [p for p in parts if p]


def detect_bump(a: Behaviour, b: Behaviour) -> BumpEvent | None:
    """First shared resource tag, or None. Identical ids never bump."""
    if a.id == b.id:
        return None
    b_resources = set(b.resources)
    for resource in a.resources:
        if resource in b_resources:
            return BumpEvent(a=a.id, b=b.id, resource=resource)
    return None


def abandon_stale(
    traj_set: TrajectorySet, now_ms: int, patience_ms: int
) -> TrajectorySet:
    """Move trajectories that got no uptake for patience_ms to abandoned."""
    still_active = []
    for inst in traj_set.active:
        if now_ms - inst.last_mesh_ms > patience_ms:
            inst.status = ABANDONED
            traj_set.abandoned.append((inst, "no uptake"))
        else:
            still_active.append(inst)
    traj_set.active = still_active
    return traj_set


@dataclass
class RouterState:
    mode: str = phrasing.GOAL_TAGGED
    modality: str = PARALLEL
    trajectories: TrajectorySet = field(default_factory=TrajectorySet)
    sanction_level: int = 0
    history: list[TranscriptEntry] = field(default_factory=list)
    pending: list[SystemAction] = field(default_factory=list)
    ended: bool = False
    last_ts: int = 0


def route_utterance(
    traj_set: TrajectorySet,
    utterance: Utterance,
    library: PlanLibrary,
    *,
    clock=None,
    mode: str = phrasing.GOAL_TAGGED,
) -> tuple[TrajectorySet, list[MeshEvent]]:
    """Parallel-modality routing of one turn, segment by segment.

    Returns the (mutated) set and the mesh events; reply text and sanction
    accounting are the session router's job.
    """
    router = TrajectoryRouter(library, EngineConfig(mode=mode, modality=PARALLEL))
    if clock is not None:
        router.clock = clock
    events: list[MeshEvent] = []
    router._route_parallel_turn(traj_set, utterance, mode, events, [], [])
    return traj_set, events


class TrajectoryRouter:
    """Session processor over a TrajectorySet, for either modality.

    The sequential modality re-derives single-focus stack semantics from the
    trajectory machinery on purpose: it is a second, independent
    implementation that the test suite holds up against the engine.
    """

    def __init__(self, library: PlanLibrary, config: EngineConfig | None = None):
        self.library = library
        self.config = config or EngineConfig(modality=PARALLEL)
        self.policy = self.config.sanction_policy()
        self.clock = self.config.clock()

    # -- session lifecycle ------------------------------------------------

    def start_session(self) -> RouterState:
        state = RouterState(mode=self.config.mode, modality=self.config.modality)
        if self.config.greeting:
            state.pending.append(SystemAction(utterance=self.config.greeting))
            state.history.append(TranscriptEntry(SYSTEM, self.config.greeting, 0))
        return state

    # -- turns --------------------------------------------------------------

    def handle_user_turn(
        self, state: RouterState, utterance: Utterance
    ) -> tuple[RouterState, SystemAction]:
        if state.ended:
            raise SessionEnded("session has disengaged")
        state.last_ts = utterance.timestamp_ms
        state.history.append(TranscriptEntry(USER, utterance.text, utterance.timestamp_ms))
        events: list[MeshEvent] = []
        effects: list[str] = []
        parts: list[str] = []

        if state.modality == SEQUENTIAL:
            self._sequential_turn(state, utterance, events, effects, parts)
        else:
            self._route_parallel_turn(
                state.trajectories, utterance, state.mode, events, effects, parts
            )
            self._settle_sanction(state, utterance, events, parts)
            before = len(state.trajectories.abandoned)
            abandon_stale(state.trajectories, utterance.timestamp_ms, self.config.patience_ms)
            for inst, reason in state.trajectories.abandoned[before:]:
                events.append(
                    MeshEvent(DISENGAGE, behaviour_id=inst.behaviour_id, detail=reason)
                )

        reply = " ".join(p for p in parts if p)
        action = SystemAction(utterance=reply, events=events, effects=effects)
        state.history.append(
            TranscriptEntry(SYSTEM, reply, utterance.timestamp_ms, events=list(events))
        )
        return state, action

    def handle_timeout(
        self, state: RouterState, now_ms: int | None = None
    ) -> tuple[RouterState, SystemAction]:
        if state.ended:
            raise SessionEnded("session has disengaged")
        ts = state.last_ts if now_ms is None else now_ms
        state.last_ts = ts
        active = state.trajectories.active
        if state.modality == SEQUENTIAL:
            # Mirrors the engine exactly: only the floor-holder is prompted.
            if not active:
                reply = phrasing.CLARIFICATION_OPENER
                event = MeshEvent(TIMEOUT_PROMPT, detail="clarification opener")
            else:
                focus = active[-1]
                prompt = self._next_prompt(focus)
                reply = prompt or phrasing.FLOOR_OFFER
                event = MeshEvent(
                    TIMEOUT_PROMPT,
                    behaviour_id=focus.behaviour_id,
                    detail="reprompting focus" if prompt else "nothing left to prompt",
                )
            extra: list[MeshEvent] = []
        else:
            reply = None
            event = MeshEvent(TIMEOUT_PROMPT, detail="clarification opener")
            for inst in active:
                prompt = self._next_prompt(inst)
                if prompt:
                    reply = prompt
                    event = MeshEvent(
                        TIMEOUT_PROMPT, behaviour_id=inst.behaviour_id, detail="reprompting"
                    )
                    break
            if reply is None:
                reply = phrasing.CLARIFICATION_OPENER if not active else phrasing.FLOOR_OFFER
                if active:
                    event = MeshEvent(TIMEOUT_PROMPT, detail="nothing left to prompt")
            before = len(state.trajectories.abandoned)
            abandon_stale(state.trajectories, ts, self.config.patience_ms)
            extra = [
                MeshEvent(DISENGAGE, behaviour_id=inst.behaviour_id, detail=reason)
                for inst, reason in state.trajectories.abandoned[before:]
            ]
        action = SystemAction(utterance=reply, events=[event] + extra)
        state.history.append(TranscriptEntry(SYSTEM, reply, ts, events=[event] + extra))
        return state, action

    def explain(self, state: RouterState) -> str:
        instances = (
            list(reversed(state.trajectories.active))
            if state.modality == SEQUENTIAL
            else list(state.trajectories.active)
        )
        if not instances:
            return "I am not doing anything yet"
        labels = []
        for inst in instances:
            behaviour = lookup(self.library, inst.behaviour_id)
            if state.mode == phrasing.GOAL_TAGGED and behaviour.goal_description:
                labels.append(behaviour.goal_description)
            else:
                labels.append(behaviour.id)
        if len(labels) == 1:
            return f"I am trying to: {labels[0]}"
        return f"I am trying to: {labels[0]} (then: {', '.join(labels[1:])})"

    # -- parallel routing ----------------------------------------------------

    def _route_parallel_turn(
        self,
        traj_set: TrajectorySet,
        utterance: Utterance,
        mode: str,
        events: list[MeshEvent],
        effects: list[str],
        parts: list[str],
    ) -> None:
        ts = utterance.timestamp_ms
        for segment in segment_turn(utterance.text):
            seg = Utterance(text=segment, timestamp_ms=ts, speaker=USER)
            if self._mesh_active(traj_set, seg, mode, events, effects, parts):
                continue
            if self._activate_from_library(traj_set, seg, mode, events, effects, parts):
                continue
            events.append(
                MeshEvent(NO_ACCOUNT, detail=f'nothing accounts for "{segment}"')
            )

    def _mesh_active(
        self,
        traj_set: TrajectorySet,
        segment: Utterance,
        mode: str,
        events: list[MeshEvent],
        effects: list[str],
        parts: list[str],
    ) -> bool:
        for inst in traj_set.active:
            behaviour = lookup(self.library, inst.behaviour_id)
            result = match_utterance(
                segment,
                behaviour,
                gazetteers=self.library.gazetteers,
                clock=self.clock,
            )
            if not result.meshes:
                continue
            applied = tuple(f for f in result.fills if f.slot not in inst.filled)
            self._apply_fills(inst, applied, segment.timestamp_ms)
            events.append(
                MeshEvent(
                    UNNOTICED,
                    behaviour_id=inst.behaviour_id,
                    detail=phrasing.fills_detail(applied, result.triggered),
                )
            )
            if self._all_required_filled(inst):
                self._complete_parallel(traj_set, inst, events, effects, parts, mode)
            else:
                prompt = self._next_prompt(inst)
                if prompt:
                    parts.append(prompt)
            return True
        return False

    def _activate_from_library(
        self,
        traj_set: TrajectorySet,
        segment: Utterance,
        mode: str,
        events: list[MeshEvent],
        effects: list[str],
        parts: list[str],
    ) -> bool:
        candidates = self._scan(segment, exclude=traj_set.active_ids())
        if not candidates:
            return False
        best = self._pick(candidates)
        behaviour = lookup(self.library, best.behaviour_id)

        if not self._deps_met(traj_set, behaviour):
            self._gate_parallel(
                traj_set, behaviour, best, mode, events, parts, segment.timestamp_ms
            )
            return True

        holder = self._bumped_holder(traj_set, behaviour)
        if holder is not None:
            bump = detect_bump(lookup(self.library, holder.behaviour_id), behaviour)
            assert bump is not None
            events.append(
                MeshEvent(
                    ACCOUNTED_FOR_SWITCH,
                    behaviour_id=behaviour.id,
                    detail=(
                        f"bump on {bump.resource}: {bump.a} holds it;"
                        f" activation of {bump.b} refused"
                    ),
                )
            )
            holder_behaviour = lookup(self.library, holder.behaviour_id)
            parts.append(
                phrasing.bump_refusal(mode, holder_behaviour, self._next_prompt(holder))
            )
            return True

        inst = self._activate(traj_set, behaviour, best.fills, segment.timestamp_ms)
        events.append(
            MeshEvent(
                ACCOUNTED_FOR_SWITCH,
                behaviour_id=behaviour.id,
                detail=phrasing.fills_detail(best.fills, best.triggered),
            )
        )
        if self._all_required_filled(inst):
            self._complete_parallel(traj_set, inst, events, effects, parts, mode)
        else:
            parts.append(
                phrasing.ack_switch(mode, behaviour, self._next_prompt(inst) or "")
            )
        return True

    def _gate_parallel(
        self,
        traj_set: TrajectorySet,
        behaviour: Behaviour,
        result: MatchResult,
        mode: str,
        events: list[MeshEvent],
        parts: list[str],
        ts: int,
    ) -> None:
        if not any(q.behaviour_id == behaviour.id for q in traj_set.queued):
            traj_set.queued.append(QueuedActivation(behaviour.id, result.fills))
        prerequisite = self._deepest_unmet(traj_set, behaviour)
        holder = next(
            (i for i in traj_set.active if i.behaviour_id == prerequisite.id), None
        )
        if holder is not None:
            events.append(
                MeshEvent(
                    ACCOUNTED_FOR_SWITCH,
                    behaviour_id=behaviour.id,
                    detail=f"gated behind {prerequisite.id}; deferred",
                )
            )
            prompt = self._next_prompt(holder) or phrasing.FLOOR_OFFER
            parts.append(phrasing.ack_deferred(mode, behaviour, prompt))
            return
        bumped = self._bumped_holder(traj_set, prerequisite)
        if bumped is not None:
            bump = detect_bump(lookup(self.library, bumped.behaviour_id), prerequisite)
            assert bump is not None
            events.append(
                MeshEvent(
                    ACCOUNTED_FOR_SWITCH,
                    behaviour_id=prerequisite.id,
                    detail=(
                        f"bump on {bump.resource}: {bump.a} holds it;"
                        f" activation of {bump.b} refused"
                    ),
                )
            )
            parts.append(
                phrasing.bump_refusal(
                    mode, lookup(self.library, bumped.behaviour_id), self._next_prompt(bumped)
                )
            )
            return
        inst = self._activate(traj_set, prerequisite, (), ts)
        events.append(
            MeshEvent(
                ACCOUNTED_FOR_SWITCH,
                behaviour_id=prerequisite.id,
                detail=f"{behaviour.id} queued behind dependencies; pushed {prerequisite.id}",
            )
        )
        prompt = self._next_prompt(inst) or phrasing.FLOOR_OFFER
        parts.append(phrasing.ack_gated(mode, behaviour, prompt))

    def _complete_parallel(
        self,
        traj_set: TrajectorySet,
        inst: BehaviourInstance,
        events: list[MeshEvent],
        effects: list[str],
        parts: list[str],
        mode: str,
    ) -> None:
        while inst is not None:
            behaviour = lookup(self.library, inst.behaviour_id)
            inst.status = COMPLETED
            traj_set.active.remove(inst)
            traj_set.completed.append(inst)
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
            parts.append(phrasing.completion_text(mode, behaviour))
            inst = self._dequeue_parallel(traj_set, events, parts, mode)

    def _dequeue_parallel(
        self,
        traj_set: TrajectorySet,
        events: list[MeshEvent],
        parts: list[str],
        mode: str,
    ) -> BehaviourInstance | None:
        for q in list(traj_set.queued):
            behaviour = lookup(self.library, q.behaviour_id)
            if not self._deps_met(traj_set, behaviour):
                continue
            if self._bumped_holder(traj_set, behaviour) is not None:
                continue  # resource still held; stays queued
            traj_set.queued.remove(q)
            inst = self._activate(traj_set, behaviour, q.fills, self._now(traj_set))
            if self._all_required_filled(inst):
                return inst
            prompt = self._next_prompt(inst) or phrasing.FLOOR_OFFER
            parts.append(phrasing.dequeued_text(mode, behaviour, prompt))
            return None
        return None

    def _settle_sanction(
        self,
        state: RouterState,
        utterance: Utterance,
        events: list[MeshEvent],
        parts: list[str],
    ) -> None:
        meshed = any(
            e.kind in (UNNOTICED, ACCOUNTED_FOR_SWITCH, COMPLETION) for e in events
        )
        if meshed:
            state.sanction_level = 0
            return
        if not any(e.kind == NO_ACCOUNT for e in events):
            return
        state.sanction_level += 1
        level = state.sanction_level
        events.append(
            MeshEvent(
                SANCTION_STEP,
                detail=f"rung {min(level, len(self.policy.ladder))} of {len(self.policy.ladder)}",
            )
        )
        if self.policy.disengages_at(level):
            events.append(MeshEvent(DISENGAGE, detail="sanction ladder exhausted"))
            state.ended = True
            parts.clear()
        else:
            parts.append(self.policy.rung(level))

    # -- sequential (degenerate) modality -------------------------------------

    def _sequential_turn(
        self,
        state: RouterState,
        utterance: Utterance,
        events: list[MeshEvent],
        effects: list[str],
        parts: list[str],
    ) -> None:
        traj_set = state.trajectories
        stack = traj_set.active  # last element is the floor-holder
        ts = utterance.timestamp_ms

        if stack:
            focus = stack[-1]
            behaviour = lookup(self.library, focus.behaviour_id)
            result = match_utterance(
                utterance,
                behaviour,
                gazetteers=self.library.gazetteers,
                clock=self.clock,
            )
            if result.meshes:
                applied = tuple(f for f in result.fills if f.slot not in focus.filled)
                self._apply_fills(focus, applied, ts)
                state.sanction_level = 0
                events.append(
                    MeshEvent(
                        UNNOTICED,
                        behaviour_id=focus.behaviour_id,
                        detail=phrasing.fills_detail(applied, result.triggered),
                    )
                )
                if self._all_required_filled(focus):
                    parts.append(self._sequential_cascade(state, events, effects))
                else:
                    parts.append(self._next_prompt(focus) or "Okay.")
                return

        for idx in range(len(stack) - 2, -1, -1):
            inst = stack[idx]
            behaviour = lookup(self.library, inst.behaviour_id)
            result = match_utterance(
                utterance,
                behaviour,
                gazetteers=self.library.gazetteers,
                clock=self.clock,
            )
            if result.meshes:
                stack.pop(idx)
                if stack:
                    stack[-1].status = SUSPENDED
                inst.status = ACTIVE
                stack.append(inst)
                applied = tuple(f for f in result.fills if f.slot not in inst.filled)
                self._apply_fills(inst, applied, ts)
                state.sanction_level = 0
                events.append(
                    MeshEvent(
                        ACCOUNTED_FOR_SWITCH,
                        behaviour_id=inst.behaviour_id,
                        detail="resumed suspended; "
                        + phrasing.fills_detail(applied, result.triggered),
                    )
                )
                behaviour = lookup(self.library, inst.behaviour_id)
                if self._all_required_filled(inst):
                    tail = self._sequential_cascade(state, events, effects)
                else:
                    tail = self._next_prompt(inst) or "Okay."
                parts.append(phrasing.resumption_text(state.mode, behaviour, tail))
                return

        candidates = self._scan(utterance, exclude=traj_set.active_ids())
        if candidates:
            best = self._pick(candidates)
            behaviour = lookup(self.library, best.behaviour_id)
            state.sanction_level = 0
            if self._deps_met(traj_set, behaviour):
                if stack:
                    stack[-1].status = SUSPENDED
                inst = self._activate(traj_set, behaviour, best.fills, ts)
                events.append(
                    MeshEvent(
                        ACCOUNTED_FOR_SWITCH,
                        behaviour_id=behaviour.id,
                        detail=phrasing.fills_detail(best.fills, best.triggered),
                    )
                )
                if self._all_required_filled(inst):
                    tail = self._sequential_cascade(state, events, effects)
                else:
                    tail = self._next_prompt(inst) or "Okay."
                parts.append(phrasing.ack_switch(state.mode, behaviour, tail))
                return
            self._sequential_gated(state, behaviour, best, events, effects, parts)
            return

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
        else:
            parts.append(self.policy.rung(level))

    def _sequential_gated(
        self,
        state: RouterState,
        behaviour: Behaviour,
        result: MatchResult,
        events: list[MeshEvent],
        effects: list[str],
        parts: list[str],
    ) -> None:
        traj_set = state.trajectories
        stack = traj_set.active
        if not any(q.behaviour_id == behaviour.id for q in traj_set.queued):
            traj_set.queued.append(QueuedActivation(behaviour.id, result.fills))
        prerequisite = self._deepest_unmet(traj_set, behaviour)
        if prerequisite.id in traj_set.active_ids():
            events.append(
                MeshEvent(
                    ACCOUNTED_FOR_SWITCH,
                    behaviour_id=behaviour.id,
                    detail=f"gated behind {prerequisite.id}; deferred",
                )
            )
            focus = stack[-1]
            prompt = self._next_prompt(focus) or phrasing.FLOOR_OFFER
            parts.append(phrasing.ack_deferred(state.mode, behaviour, prompt))
            return
        if stack:
            stack[-1].status = SUSPENDED
        inst = self._activate(traj_set, prerequisite, (), state.last_ts)
        events.append(
            MeshEvent(
                ACCOUNTED_FOR_SWITCH,
                behaviour_id=prerequisite.id,
                detail=f"{behaviour.id} queued behind dependencies; pushed {prerequisite.id}",
            )
        )
        if self._all_required_filled(inst):
            tail = self._sequential_cascade(state, events, effects)
        else:
            tail = self._next_prompt(inst) or phrasing.FLOOR_OFFER
        parts.append(phrasing.ack_gated(state.mode, behaviour, tail))

    def _sequential_cascade(
        self,
        state: RouterState,
        events: list[MeshEvent],
        effects: list[str],
    ) -> str:
        traj_set = state.trajectories
        stack = traj_set.active
        parts: list[str] = []
        while True:
            inst = stack.pop()
            inst.status = COMPLETED
            traj_set.completed.append(inst)
            behaviour = lookup(self.library, inst.behaviour_id)
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

            eligible = [
                q
                for q in traj_set.queued
                if self._deps_met(traj_set, lookup(self.library, q.behaviour_id))
            ]
            if eligible:
                for q in eligible:
                    traj_set.queued.remove(q)
                for q in reversed(eligible):
                    if stack:
                        stack[-1].status = SUSPENDED
                    self._activate(
                        traj_set, lookup(self.library, q.behaviour_id), q.fills, state.last_ts
                    )
                top = stack[-1]
                if self._all_required_filled(top):
                    continue
                top_behaviour = lookup(self.library, top.behaviour_id)
                prompt = self._next_prompt(top) or phrasing.FLOOR_OFFER
                parts.append(phrasing.dequeued_text(state.mode, top_behaviour, prompt))
                break
            if stack:
                top = stack[-1]
                top.status = ACTIVE
                if self._all_required_filled(top):
                    continue
                top_behaviour = lookup(self.library, top.behaviour_id)
                prompt = self._next_prompt(top) or phrasing.FLOOR_OFFER
                parts.append(phrasing.resumption_text(state.mode, top_behaviour, prompt))
                break
            parts.append(phrasing.FLOOR_OFFER)
            break
        return " ".join(parts)

    # -- shared low-level helpers ---------------------------------------------

    def _scan(self, utterance: Utterance, exclude: set[str]) -> list[MatchResult]:
        return scan_library(utterance, self.library, exclude=exclude, clock=self.clock)

    @staticmethod
    def _pick(candidates: list[MatchResult]) -> MatchResult:
        best = candidates[0]
        for c in candidates[1:]:
            if len(c.fills) > len(best.fills):
                best = c
        return best

    def _deps_met(self, traj_set: TrajectorySet, behaviour: Behaviour) -> bool:
        done = traj_set.completed_ids()
        return all(dep in done for dep in behaviour.dependencies)

    def _deepest_unmet(self, traj_set: TrajectorySet, behaviour: Behaviour) -> Behaviour:
        done = traj_set.completed_ids()
        node = behaviour
        while True:
            unmet = next((d for d in node.dependencies if d not in done), None)
            if unmet is None:
                return node
            node = lookup(self.library, unmet)

    def _bumped_holder(
        self, traj_set: TrajectorySet, candidate: Behaviour
    ) -> BehaviourInstance | None:
        for inst in traj_set.active:
            holder = lookup(self.library, inst.behaviour_id)
            if detect_bump(holder, candidate) is not None:
                return inst
        return None

    def _activate(
        self,
        traj_set: TrajectorySet,
        behaviour: Behaviour,
        fills: tuple[Fill, ...],
        ts: int,
    ) -> BehaviourInstance:
        inst = BehaviourInstance(behaviour_id=behaviour.id, last_mesh_ms=ts)
        self._apply_fills(inst, fills, ts)
        traj_set.active.append(inst)
        return inst

    @staticmethod
    def _apply_fills(inst: BehaviourInstance, fills: tuple[Fill, ...], ts: int) -> None:
        for f in fills:
            if f.slot not in inst.filled:
                inst.filled[f.slot] = f
        inst.last_mesh_ms = ts

    def _all_required_filled(self, inst: BehaviourInstance) -> bool:
        behaviour = lookup(self.library, inst.behaviour_id)
        required = behaviour.required_slots
        if not required:
            return False
        return all(s.name in inst.filled for s in required)

    def _next_prompt(self, inst: BehaviourInstance) -> str | None:
        behaviour = lookup(self.library, inst.behaviour_id)
        for want_required in (True, False):
            for slot in behaviour.slots:
                if slot.required is not want_required or not slot.prompts:
                    continue
                if slot.name in inst.filled:
                    continue
                cursor = inst.prompt_cursor.get(slot.name, 0)
                inst.prompt_cursor[slot.name] = cursor + 1
                return slot.prompts[cursor % len(slot.prompts)]
        return None

    def _now(self, traj_set: TrajectorySet) -> int:
        latest = 0
        for inst in traj_set.active:
            latest = max(latest, inst.last_mesh_ms)
        return latest
