/**
 * Browser chat + inspector against the session service.
 *
 * Everything rendered comes from wire messages: the reducer in
 * projection.ts folds the stream, render() paints it. Dialog decisions
 * happen server-side only.
 */

import { WireMessage, isWireMessage } from "./protocol.js";
import { SessionView, foldMessages } from "./projection.js";
import { alignByTurn } from "./compare.js";

interface Connection {
  sessionId: string;
  socket: WebSocket;
  messages: WireMessage[];
}

let connection: Connection | null = null;
const userTurns: string[] = [];

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function setStatus(text: string, kind: "ok" | "bad" | "idle" = "idle"): void {
  const status = el<HTMLSpanElement>("status");
  status.textContent = text;
  status.className = `status ${kind}`;
}

async function createSession(mode: string): Promise<string> {
  const response = await fetch("/sessions", {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify({ config: { mode } }),
  });
  if (!response.ok) throw new Error(`session create failed: ${response.status}`);
  const data = (await response.json()) as { session_id: string };
  return data.session_id;
}

function streamUrl(sessionId: string): string {
  const scheme = location.protocol === "https:" ? "wss" : "ws";
  return `${scheme}://${location.host}/sessions/${sessionId}/stream`;
}

function connect(): void {
  const mode = el<HTMLSelectElement>("mode-select").value;
  setStatus("connecting…");
  createSession(mode)
    .then((sessionId) => {
      openSocket(sessionId);
    })
    .catch((error) => {
      setStatus(`connection failed: ${error}`, "bad");
      el<HTMLButtonElement>("retry").hidden = false;
    });
}

function openSocket(sessionId: string): void {
  const socket = new WebSocket(streamUrl(sessionId));
  const conn: Connection = { sessionId, socket, messages: [] };
  connection = conn;
  socket.onopen = () => {
    setStatus(`session ${sessionId.slice(0, 8)}`, "ok");
    el<HTMLButtonElement>("retry").hidden = true;
    void refreshSnapshot();
  };
  socket.onmessage = (event: MessageEvent<string>) => {
    const parsed: unknown = JSON.parse(event.data);
    if (isWireMessage(parsed)) {
      conn.messages.push(parsed);
      render();
    }
  };
  socket.onclose = () => {
    setStatus("disconnected", "bad");
    el<HTMLButtonElement>("retry").hidden = false;
  };
}

async function refreshSnapshot(): Promise<void> {
  // The snapshot is also appended to the stream, so folding stays the
  // single source of truth; fetching just forces one out on (re)connect.
  if (!connection) return;
  await fetch(`/sessions/${connection.sessionId}/snapshot`);
}

function send(): void {
  if (!connection || connection.socket.readyState !== WebSocket.OPEN) return;
  const input = el<HTMLInputElement>("chat-input");
  const text = input.value.trim();
  if (!text) return;
  userTurns.push(text);
  connection.socket.send(JSON.stringify({ type: "user_utterance", payload: { text } }));
  input.value = "";
}

function render(): void {
  if (!connection) return;
  const view = foldMessages(connection.messages);
  renderChat(view);
  renderPanels(view);
  renderTimeline(view);
  if (view.ended) setStatus("session ended", "bad");
}

function renderChat(view: SessionView): void {
  const log = el<HTMLDivElement>("chat-log");
  log.replaceChildren(
    ...view.chat.map((line) => {
      const div = document.createElement("div");
      div.className = `line ${line.speaker}`;
      div.textContent = `${line.speaker === "user" ? "you" : "system"}> ${line.text}`;
      return div;
    }),
  );
  log.scrollTop = log.scrollHeight;
}

function renderPanels(view: SessionView): void {
  const stack = el<HTMLUListElement>("stack-panel");
  const fills = el<HTMLTableSectionElement>("fills-body");
  const meter = el<HTMLDivElement>("sanction-meter");
  const badges = el<HTMLDivElement>("mode-badges");
  if (!view.panels) return;
  stack.replaceChildren(
    ...view.panels.stack.map((entry) => {
      const li = document.createElement("li");
      li.textContent = `${entry.behaviour_id} (${entry.status})`;
      li.className = entry.status;
      return li;
    }),
  );
  fills.replaceChildren(
    ...view.panels.stack.flatMap((entry) =>
      Object.entries(entry.filled).map(([slot, value]) => {
        const tr = document.createElement("tr");
        for (const cell of [entry.behaviour_id, slot, value]) {
          const td = document.createElement("td");
          td.textContent = cell;
          tr.appendChild(td);
        }
        return tr;
      }),
    ),
  );
  meter.textContent = `sanction: ${"█".repeat(view.panels.sanctionLevel) || "–"} (${view.panels.sanctionLevel})`;
  badges.textContent = `${view.panels.mode} · ${view.panels.modality}`;
}

function renderTimeline(view: SessionView): void {
  const timeline = el<HTMLTableSectionElement>("timeline-body");
  timeline.replaceChildren(
    ...view.timeline.map((row) => {
      const tr = document.createElement("tr");
      tr.className = row.kind;
      for (const cell of [
        String(row.turn),
        row.kind,
        row.behaviourId ?? "",
        row.detail,
      ]) {
        const td = document.createElement("td");
        td.textContent = cell;
        tr.appendChild(td);
      }
      return tr;
    }),
  );
}

// -- mode comparison ----------------------------------------------------------

async function replayInMode(mode: string, turns: string[]): Promise<WireMessage[]> {
  const sessionId = await createSession(mode);
  const messages: WireMessage[] = [];
  const socket = new WebSocket(streamUrl(sessionId));
  await new Promise<void>((resolve, reject) => {
    socket.onopen = () => resolve();
    socket.onerror = () => reject(new Error("socket error"));
  });
  let snapshotsSeen = 0;
  const done = new Promise<void>((resolve) => {
    socket.onmessage = (event: MessageEvent<string>) => {
      const parsed: unknown = JSON.parse(event.data);
      if (!isWireMessage(parsed)) return;
      messages.push(parsed);
      if (parsed.type === "state_snapshot") {
        snapshotsSeen += 1;
        if (snapshotsSeen >= turns.length) resolve();
      }
    };
  });
  for (const text of turns) {
    socket.send(JSON.stringify({ type: "user_utterance", payload: { text } }));
  }
  await done;
  socket.close();
  return messages;
}

async function compareModes(): Promise<void> {
  if (userTurns.length === 0) {
    setStatus("nothing to compare yet", "bad");
    return;
  }
  setStatus("replaying in both modes…");
  try {
    const [tagged, free] = await Promise.all([
      replayInMode("goal_tagged", userTurns),
      replayInMode("goal_free", userTurns),
    ]);
    renderComparison(alignByTurn(tagged, free));
    setStatus("comparison ready", "ok");
  } catch (error) {
    setStatus(`comparison failed: ${error}`, "bad");
  }
}

function renderComparison(rows: ReturnType<typeof alignByTurn>): void {
  const body = el<HTMLTableSectionElement>("compare-body");
  el<HTMLDivElement>("compare-panel").hidden = false;
  body.replaceChildren(
    ...rows.map((row) => {
      const tr = document.createElement("tr");
      const cells = [
        String(row.turn),
        row.left?.events.map((e) => `${e.kind}${e.behaviourId ? `→${e.behaviourId}` : ""}`).join(", ") ?? "",
        row.left?.reply ?? "",
        row.right?.events.map((e) => `${e.kind}${e.behaviourId ? `→${e.behaviourId}` : ""}`).join(", ") ?? "",
        row.right?.reply ?? "",
      ];
      cells.forEach((cell, i) => {
        const td = document.createElement("td");
        td.textContent = cell;
        if ((i === 2 || i === 4) && row.replyDiffers) td.className = "differs";
        tr.appendChild(td);
      });
      tr.className = row.eventsEqual ? "events-equal" : "events-diverged";
      return tr;
    }),
  );
}

// -- wiring ---------------------------------------------------------------------

export function boot(): void {
  el<HTMLButtonElement>("connect").addEventListener("click", connect);
  el<HTMLButtonElement>("retry").addEventListener("click", connect);
  el<HTMLButtonElement>("send").addEventListener("click", send);
  el<HTMLButtonElement>("compare").addEventListener("click", () => void compareModes());
  el<HTMLInputElement>("chat-input").addEventListener("keydown", (event) => {
    if (event.key === "Enter") send();
  });
}

if (typeof document !== "undefined" && document.getElementById("connect")) {
  boot();
}
