/**
 * Wire protocol types, mirroring the service's message schema.
 * Every message carries the session id and a per-session monotonic seq.
 */

export type WireType =
  | "user_utterance"
  | "system_utterance"
  | "event"
  | "state_snapshot"
  | "error"
  | "end";

export interface WireMessage {
  session_id: string;
  seq: number;
  type: WireType;
  payload: Record<string, unknown>;
}

export interface StackEntry {
  behaviour_id: string;
  filled: Record<string, string>;
  status: string;
}

export interface SnapshotPayload {
  focus_stack: StackEntry[];
  sanction_level: number;
  mode: string;
  modality: string;
}

export interface EventPayload {
  kind: string;
  behaviour_id: string | null;
  detail: string;
}

const WIRE_TYPES = new Set([
  "user_utterance",
  "system_utterance",
  "event",
  "state_snapshot",
  "error",
  "end",
]);

export function isWireMessage(value: unknown): value is WireMessage {
  if (typeof value !== "object" || value === null) return false;
  const m = value as Record<string, unknown>;
  return (
    typeof m.session_id === "string" &&
    typeof m.seq === "number" &&
    typeof m.type === "string" &&
    WIRE_TYPES.has(m.type) &&
    typeof m.payload === "object" &&
    m.payload !== null
  );
}

export function snapshotPayload(message: WireMessage): SnapshotPayload {
  return message.payload as unknown as SnapshotPayload;
}

export function eventPayload(message: WireMessage): EventPayload {
  return message.payload as unknown as EventPayload;
}
