"""Regenerate the recorded wire-stream fixtures the UI tests run against.

Drives the real service in-process with the waldorf turns, once per mode,
and captures every stream message plus a final on-demand snapshot.

    python3 frontend/scripts/record_fixtures.py
"""

from __future__ import annotations

import json
from pathlib import Path

from fastapi.testclient import TestClient

from meshtalk.engine import EngineConfig
from meshtalk.service import create_app

ROOT = Path(__file__).resolve().parent.parent.parent
OUT = Path(__file__).resolve().parent.parent / "fixtures"

TURNS = [
    "I want to fly to London next Tuesday",
    "the Waldorf Hotel",
    "3 nights",
    "my passport number is ab123456",
]


def record(mode: str) -> dict:
    app = create_app(
        ROOT / "fixtures" / "travel.library.json",
        EngineConfig(greeting="How can I help?", institution="Acme Travel", mode=mode),
    )
    client = TestClient(app)
    session_id = client.post("/sessions", json={"config": {}}).json()["session_id"]
    messages = []
    with client.websocket_connect(f"/sessions/{session_id}/stream") as ws:
        messages.append(ws.receive_json())  # greeting replay
        for text in TURNS:
            ws.send_json({"type": "user_utterance", "payload": {"text": text}})
            while True:
                message = ws.receive_json()
                messages.append(message)
                if message["type"] == "state_snapshot":
                    break
    final_snapshot = client.get(f"/sessions/{session_id}/snapshot").json()
    messages.append(final_snapshot)
    return {"mode": mode, "turns": TURNS, "messages": messages, "final_snapshot": final_snapshot}


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    for mode, name in (("goal_tagged", "waldorf_tagged"), ("goal_free", "waldorf_free")):
        data = record(mode)
        path = OUT / f"{name}.stream.json"
        path.write_text(json.dumps(data, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
        print(f"wrote {path} ({len(data['messages'])} messages)")


if __name__ == "__main__":
    main()
