/**
 * Pure projections of the wire stream into what the panels render.
 *
 * The UI never computes a mesh classification itself: the chat log and
 * event timeline are projections of utterance/event messages, and the
 * inspector panels (stack, fills, sanction meter, mode badges) are a
 * projection of the latest state_snapshot message. Messages may arrive
 * bursty or out of order; folding always renders in seq order.
 */

import {
  EventPayload,
  SnapshotPayload,
  StackEntry,
  WireMessage,
  eventPayload,
  snapshotPayload,
} from "./protocol.js";

export interface ChatLine {
  seq: number;
  speaker: "user" | "system";
  text: string;
}

export interface TimelineRow {
  seq: number;
  turn: number;
  kind: string;
  behaviourId: string | null;
  detail: string;
}

export interface Panels {
  stack: StackEntry[];
  sanctionLevel: number;
  mode: string;
  modality: string;
}

export interface SessionView {
  chat: ChatLine[];
  timeline: TimelineRow[];
  panels: Panels | null;
  ended: boolean;
  errors: string[];
  lastSeq: number;
}

export function orderMessages(messages: WireMessage[]): WireMessage[] {
  const bySeq = new Map<number, WireMessage>();
  for (const message of messages) {
    if (!bySeq.has(message.seq)) bySeq.set(message.seq, message);
  }
  return [...bySeq.values()].sort((a, b) => a.seq - b.seq);
}

export function foldMessages(messages: WireMessage[]): SessionView {
  const view: SessionView = {
    chat: [],
    timeline: [],
    panels: null,
    ended: false,
    errors: [],
    lastSeq: 0,
  };
  let turn = 0;
  for (const message of orderMessages(messages)) {
    view.lastSeq = message.seq;
    switch (message.type) {
      case "user_utterance": {
        turn += 1;
        view.chat.push({
          seq: message.seq,
          speaker: "user",
          text: String(message.payload.text ?? ""),
        });
        break;
      }
      case "system_utterance": {
        view.chat.push({
          seq: message.seq,
          speaker: "system",
          text: String(message.payload.text ?? ""),
        });
        break;
      }
      case "event": {
        const event: EventPayload = eventPayload(message);
        view.timeline.push({
          seq: message.seq,
          turn,
          kind: event.kind,
          behaviourId: event.behaviour_id,
          detail: event.detail,
        });
        break;
      }
      case "state_snapshot": {
        view.panels = panelsFromSnapshot(snapshotPayload(message));
        break;
      }
      case "error": {
        view.errors.push(String(message.payload.message ?? "unknown error"));
        break;
      }
      case "end": {
        view.ended = true;
        break;
      }
    }
  }
  return view;
}

export function panelsFromSnapshot(payload: SnapshotPayload): Panels {
  return {
    stack: payload.focus_stack.map((entry) => ({
      behaviour_id: entry.behaviour_id,
      filled: { ...entry.filled },
      status: entry.status,
    })),
    sanctionLevel: payload.sanction_level,
    mode: payload.mode,
    modality: payload.modality,
  };
}

export function panelsEqual(a: Panels | null, b: Panels | null): boolean {
  if (a === null || b === null) return a === b;
  if (
    a.sanctionLevel !== b.sanctionLevel ||
    a.mode !== b.mode ||
    a.modality !== b.modality ||
    a.stack.length !== b.stack.length
  ) {
    return false;
  }
  for (let i = 0; i < a.stack.length; i++) {
    const left = a.stack[i];
    const right = b.stack[i];
    if (left.behaviour_id !== right.behaviour_id || left.status !== right.status) {
      return false;
    }
    const leftSlots = Object.keys(left.filled).sort();
    const rightSlots = Object.keys(right.filled).sort();
    if (leftSlots.length !== rightSlots.length) return false;
    for (const slot of leftSlots) {
      if (left.filled[slot] !== right.filled[slot]) return false;
    }
  }
  return true;
}
