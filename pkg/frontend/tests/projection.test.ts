import { readFileSync } from "node:fs";
import { resolve, dirname } from "node:path";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";

import { WireMessage, isWireMessage, snapshotPayload } from "../src/protocol.js";
import {
  foldMessages,
  orderMessages,
  panelsEqual,
  panelsFromSnapshot,
} from "../src/projection.js";

const here = dirname(fileURLToPath(import.meta.url));

interface Recorded {
  mode: string;
  turns: string[];
  messages: WireMessage[];
  final_snapshot: WireMessage;
}

function load(name: string): Recorded {
  return JSON.parse(
    readFileSync(resolve(here, `../fixtures/${name}.stream.json`), "utf-8"),
  ) as Recorded;
}

function shuffled<T>(items: T[], seed: number): T[] {
  const out = [...items];
  let state = seed;
  for (let i = out.length - 1; i > 0; i--) {
    state = (state * 1103515245 + 12345) % 2147483648;
    const j = state % (i + 1);
    [out[i], out[j]] = [out[j], out[i]];
  }
  return out;
}

describe("wire messages", () => {
  it("recorded fixture messages all satisfy the schema guard", () => {
    const recorded = load("waldorf_tagged");
    for (const message of recorded.messages) {
      expect(isWireMessage(message)).toBe(true);
    }
    expect(isWireMessage({ nope: true })).toBe(false);
  });
});

describe("projection fidelity", () => {
  for (const name of ["waldorf_tagged", "waldorf_free"]) {
    it(`${name}: panels folded from the stream equal the final snapshot`, () => {
      const recorded = load(name);
      const view = foldMessages(recorded.messages);
      const fromSnapshot = panelsFromSnapshot(snapshotPayload(recorded.final_snapshot));
      expect(view.panels).not.toBeNull();
      expect(panelsEqual(view.panels, fromSnapshot)).toBe(true);
      expect(view.panels).toEqual(fromSnapshot);
    });
  }

  it("chat log mirrors user and system utterances in order", () => {
    const recorded = load("waldorf_tagged");
    const view = foldMessages(recorded.messages);
    const userLines = view.chat.filter((line) => line.speaker === "user");
    expect(userLines.map((line) => line.text)).toEqual(recorded.turns);
    expect(view.chat[0]).toMatchObject({ speaker: "system", text: "How can I help?" });
  });

  it("timeline rows carry turn anchors and kinds", () => {
    const recorded = load("waldorf_tagged");
    const view = foldMessages(recorded.messages);
    const switchRow = view.timeline.find(
      (row) => row.kind === "accounted_for_switch" && row.behaviourId === "book_hotel",
    );
    expect(switchRow).toBeDefined();
    expect(switchRow?.turn).toBe(2);
    const completions = view.timeline.filter((row) => row.kind === "completion");
    expect(completions.map((row) => row.behaviourId)).toEqual(["book_hotel", "book_flight"]);
  });
});

describe("ordering under bursty delivery", () => {
  it("renders identically regardless of arrival order", () => {
    const recorded = load("waldorf_tagged");
    const reference = foldMessages(recorded.messages);
    for (const seed of [1, 7, 42, 1234]) {
      const reordered = foldMessages(shuffled(recorded.messages, seed));
      expect(reordered).toEqual(reference);
    }
  });

  it("drops duplicate seqs instead of double-rendering", () => {
    const recorded = load("waldorf_tagged");
    const doubled = [...recorded.messages, ...recorded.messages];
    expect(foldMessages(doubled)).toEqual(foldMessages(recorded.messages));
  });

  it("orderMessages sorts by seq", () => {
    const recorded = load("waldorf_tagged");
    const seqs = orderMessages(shuffled(recorded.messages, 99)).map((m) => m.seq);
    expect(seqs).toEqual([...seqs].sort((a, b) => a - b));
  });
});
