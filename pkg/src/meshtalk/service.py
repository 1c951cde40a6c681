"""Session service: the engine behind a wire protocol.

Every message on a session's stream is `{session_id, seq, type, payload}`
with a per-session monotonically increasing seq, covering inbound user
utterances (echoed back enriched) and everything the engine produces:
events, system utterances, state snapshots, and the end marker. Connecting
to a session's stream replays the full message history, then tails live
traffic. Messages are also appended, one JSON line each, to a per-session
file, so a persisted session reloads to exactly the stream a client saw.
"""

from __future__ import annotations

import asyncio
import json
import uuid
from pathlib import Path

from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from meshtalk.engine import EngineConfig, SessionEnded
from meshtalk.library import PlanLibrary, parse_library
from meshtalk.sessions import DialogSession

USER_UTTERANCE = "user_utterance"
SYSTEM_UTTERANCE = "system_utterance"
EVENT = "event"
STATE_SNAPSHOT = "state_snapshot"
ERROR = "error"
END = "end"
TIMEOUT_SIGNAL = "timeout"  # inbound only: client-driven idle prompt

LIVE = "live"
ENDED = "ended"


class WireMessage(BaseModel):
    session_id: str
    seq: int
    type: str
    payload: dict = Field(default_factory=dict)


class CreateSessionRequest(BaseModel):
    config: dict = Field(default_factory=dict)


class CreateSessionResponse(BaseModel):
    session_id: str


class SessionRecordResponse(BaseModel):
    session_id: str
    status: str
    messages: list[WireMessage]


class LiveSession:
    def __init__(self, session_id: str, dialog: DialogSession, store_path: Path | None):
        self.session_id = session_id
        self.dialog = dialog
        self.store_path = store_path
        self.seq = 0
        self.messages: list[WireMessage] = []
        self.lock = asyncio.Lock()
        self.watchers: list[WebSocket] = []

    @property
    def status(self) -> str:
        return ENDED if self.dialog.ended else LIVE

    def _stamp(self, type_: str, payload: dict) -> WireMessage:
        self.seq += 1
        message = WireMessage(
            session_id=self.session_id, seq=self.seq, type=type_, payload=payload
        )
        self.messages.append(message)
        if self.store_path is not None:
            with self.store_path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(message.model_dump(), ensure_ascii=False) + "\n")
        return message

    async def _broadcast(self, messages: list[WireMessage]) -> None:
        for ws in list(self.watchers):
            for message in messages:
                try:
                    await ws.send_json(message.model_dump())
                except Exception:
                    if ws in self.watchers:
                        self.watchers.remove(ws)
                    break

    def _focus_id(self) -> str | None:
        # Only sequential sessions have a single focus to attribute replies to.
        snapshot = self.dialog.snapshot()
        if snapshot["modality"] != "sequential":
            return None
        stack = snapshot["focus_stack"]
        return stack[0]["behaviour_id"] if stack else None

    async def emit_greeting(self) -> None:
        out = []
        for action in self.dialog.drain_pending():
            out.append(
                self._stamp(SYSTEM_UTTERANCE, {"text": action.utterance, "behaviour_id": None})
            )
        if out:
            await self._broadcast(out)

    async def process(self, type_: str, payload: dict) -> None:
        """One inbound client message, serialized per session."""
        async with self.lock:
            out: list[WireMessage] = []
            if type_ not in (USER_UTTERANCE, TIMEOUT_SIGNAL):
                out.append(self._stamp(ERROR, {"message": f"unknown message type {type_!r}"}))
                await self._broadcast(out)
                return
            if self.dialog.ended:
                out.append(self._stamp(ERROR, {"message": "session has ended"}))
                await self._broadcast(out)
                return
            try:
                if type_ == USER_UTTERANCE:
                    text = str(payload.get("text", ""))
                    out.append(self._stamp(USER_UTTERANCE, {"text": text}))
                    action = self.dialog.user(text)
                else:
                    action = self.dialog.timeout()
            except SessionEnded:
                out.append(self._stamp(ERROR, {"message": "session has ended"}))
                await self._broadcast(out)
                return
            for event in action.events:
                out.append(
                    self._stamp(
                        EVENT,
                        {
                            "kind": event.kind,
                            "behaviour_id": event.behaviour_id,
                            "detail": event.detail,
                        },
                    )
                )
            out.append(
                self._stamp(
                    SYSTEM_UTTERANCE,
                    {"text": action.utterance, "behaviour_id": self._focus_id()},
                )
            )
            out.append(self._stamp(STATE_SNAPSHOT, self.dialog.snapshot()))
            if self.dialog.ended:
                out.append(self._stamp(END, {"reason": "disengage"}))
            await self._broadcast(out)

    async def snapshot_message(self) -> WireMessage:
        async with self.lock:
            message = self._stamp(STATE_SNAPSHOT, self.dialog.snapshot())
            await self._broadcast([message])
            return message


def create_app(
    library: PlanLibrary | str | Path,
    config: EngineConfig | None = None,
    sessions_dir: str | Path | None = None,
    ui_dir: str | Path | None = None,
) -> FastAPI:
    if not isinstance(library, PlanLibrary):
        library = parse_library(Path(library).read_text(encoding="utf-8"))
    base_config = config or EngineConfig()
    store_dir = Path(sessions_dir) if sessions_dir is not None else None
    if store_dir is not None:
        store_dir.mkdir(parents=True, exist_ok=True)

    app = FastAPI(title="meshtalk session service")
    sessions: dict[str, LiveSession] = {}

    def get_session(session_id: str) -> LiveSession:
        session = sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"no session {session_id}")
        return session

    @app.post("/sessions", response_model=CreateSessionResponse)
    async def create_session(request: CreateSessionRequest) -> CreateSessionResponse:
        try:
            session_config = base_config.replaced(request.config)
        except (ValueError, TypeError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        session_id = uuid.uuid4().hex
        store_path = store_dir / f"{session_id}.jsonl" if store_dir is not None else None
        session = LiveSession(session_id, DialogSession(library, session_config), store_path)
        sessions[session_id] = session
        await session.emit_greeting()
        return CreateSessionResponse(session_id=session_id)

    @app.get("/sessions/{session_id}/snapshot", response_model=WireMessage)
    async def snapshot(session_id: str) -> WireMessage:
        return await get_session(session_id).snapshot_message()

    @app.get("/sessions/{session_id}/record", response_model=SessionRecordResponse)
    async def record(session_id: str) -> SessionRecordResponse:
        session = get_session(session_id)
        return SessionRecordResponse(
            session_id=session_id, status=session.status, messages=session.messages
        )

    @app.websocket("/sessions/{session_id}/stream")
    async def stream(websocket: WebSocket, session_id: str) -> None:
        session = sessions.get(session_id)
        if session is None:
            await websocket.close(code=4404)
            return
        await websocket.accept()
        # Replay everything so far, then tail live traffic.
        async with session.lock:
            backlog = list(session.messages)
            session.watchers.append(websocket)
        for message in backlog:
            await websocket.send_json(message.model_dump())
        try:
            while True:
                raw = await websocket.receive_json()
                if not isinstance(raw, dict):
                    continue
                await session.process(str(raw.get("type", "")), raw.get("payload") or {})
        except WebSocketDisconnect:
            pass
        finally:
            if websocket in session.watchers:
                session.watchers.remove(websocket)

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


def load_session_record(path: str | Path) -> list[WireMessage]:
    """Reload a persisted session's messages from its JSON-lines file."""
    messages = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            messages.append(WireMessage(**json.loads(line)))
    return messages
