"""One live conversation: engine or trajectory router, chosen by modality.

Timestamps are logical (1000 ms per step) so that replays, goldens and the
service are deterministic regardless of wall-clock time.
"""

from __future__ import annotations

from meshtalk.engine import (
    Engine,
    EngineConfig,
    MeshEvent,
    PARALLEL,
    SystemAction,
    TranscriptEntry,
    snapshot_payload,
)
from meshtalk.library import PlanLibrary
from meshtalk.matching import USER, Utterance
from meshtalk.trajectories import TrajectoryRouter

STEP_MS = 1000


class DialogSession:
    def __init__(self, library: PlanLibrary, config: EngineConfig | None = None):
        self.library = library
        self.config = config or EngineConfig()
        if self.config.modality == PARALLEL:
            self.processor = TrajectoryRouter(library, self.config)
        else:
            self.processor = Engine(library, self.config)
        self.state = self.processor.start_session()
        self.turn = 0
        self.events: list[MeshEvent] = []

    # -- stepping -----------------------------------------------------------

    def drain_pending(self) -> list[SystemAction]:
        actions = list(self.state.pending)
        self.state.pending.clear()
        return actions

    def user(self, text: str) -> SystemAction:
        self.turn += 1
        utterance = Utterance(text=text, timestamp_ms=self.turn * STEP_MS, speaker=USER)
        _, action = self.processor.handle_user_turn(self.state, utterance)
        self.events.extend(action.events)
        return action

    def timeout(self) -> SystemAction:
        self.turn += 1
        _, action = self.processor.handle_timeout(self.state, now_ms=self.turn * STEP_MS)
        self.events.extend(action.events)
        return action

    # -- inspection -----------------------------------------------------------

    @property
    def ended(self) -> bool:
        return self.state.ended

    @property
    def history(self) -> list[TranscriptEntry]:
        return self.state.history

    def explain(self) -> str:
        return self.processor.explain(self.state)

    def snapshot(self) -> dict:
        if self.config.modality == PARALLEL:
            traj = self.state.trajectories
            payload = snapshot_payload(self.state, instances=list(traj.active))
        else:
            payload = snapshot_payload(self.state)
        return payload
