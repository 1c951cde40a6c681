/**
 * Side-by-side mode comparison: the same user turns replayed against two
 * sessions (goal-tagged vs goal-free) should produce identical event
 * columns; only acknowledgment wording may differ, and that difference is
 * what gets highlighted.
 */

import { WireMessage, eventPayload } from "./protocol.js";
import { orderMessages } from "./projection.js";

export interface TurnColumn {
  turn: number;
  events: { kind: string; behaviourId: string | null }[];
  reply: string | null;
}

export interface ComparisonRow {
  turn: number;
  left: TurnColumn | null;
  right: TurnColumn | null;
  eventsEqual: boolean;
  replyDiffers: boolean;
}

export function turnColumns(messages: WireMessage[]): TurnColumn[] {
  const columns: TurnColumn[] = [];
  let current: TurnColumn | null = null;
  for (const message of orderMessages(messages)) {
    if (message.type === "user_utterance") {
      current = { turn: columns.length + 1, events: [], reply: null };
      columns.push(current);
    } else if (message.type === "event" && current) {
      const event = eventPayload(message);
      current.events.push({ kind: event.kind, behaviourId: event.behaviour_id });
    } else if (message.type === "system_utterance" && current && current.reply === null) {
      current.reply = String(message.payload.text ?? "");
    }
  }
  return columns;
}

export function alignByTurn(
  left: WireMessage[],
  right: WireMessage[],
): ComparisonRow[] {
  const a = turnColumns(left);
  const b = turnColumns(right);
  const rows: ComparisonRow[] = [];
  const turns = Math.max(a.length, b.length);
  for (let i = 0; i < turns; i++) {
    const la = a[i] ?? null;
    const rb = b[i] ?? null;
    rows.push({
      turn: i + 1,
      left: la,
      right: rb,
      eventsEqual: columnsEventsEqual(la, rb),
      replyDiffers: (la?.reply ?? null) !== (rb?.reply ?? null),
    });
  }
  return rows;
}

function columnsEventsEqual(a: TurnColumn | null, b: TurnColumn | null): boolean {
  if (a === null || b === null) return a === b;
  if (a.events.length !== b.events.length) return false;
  return a.events.every(
    (event, i) =>
      event.kind === b.events[i].kind && event.behaviourId === b.events[i].behaviourId,
  );
}
