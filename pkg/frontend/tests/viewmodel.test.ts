import { describe, expect, it } from "vitest";

import type { SessionSnapshot } from "../src/types.js";
import { deriveView, formatDepth } from "../src/viewmodel.js";

function snapshot(overrides: Partial<SessionSnapshot> = {}): SessionSnapshot {
  return {
    session_id: "s0001",
    state: "gated",
    config: { window: 5, top_k: 3 },
    frames_seen: 5,
    frames_buffered: 5,
    ranked: [
      { label: "type_a_gear", bbox: [20, 20, 60, 60], depth: 1.5, confidence: 0.95, votes: 5 },
      { label: "type_a_cover", bbox: [80, 30, 140, 90], depth: 3.0, confidence: 0.9, votes: 5 },
    ],
    context: [
      {
        label: "type_a_gear",
        depth: 1.5,
        no_knowledge: false,
        matches: [{ part_id: "P01", display_name: "Type A Gear", distance: 0 }],
      },
    ],
    answer: "The closest part is Type A Gear.",
    error: null,
    ...overrides,
  };
}

describe("thin-client rule", () => {
  it("renders ranked values verbatim from the snapshot", () => {
    const snap = snapshot();
    const view = deriveView(snap);
    expect(view.ranked).toHaveLength(2);
    view.ranked.forEach((row, i) => {
      // every displayed number IS the API number (identity, no recomputation)
      expect(row.label).toBe(snap.ranked[i].label);
      expect(row.depth).toBe(snap.ranked[i].depth);
      expect(row.confidence).toBe(snap.ranked[i].confidence);
      expect(row.votes).toBe(snap.ranked[i].votes);
      expect(row.bbox).toEqual(snap.ranked[i].bbox);
      expect(row.depthText).toBe(String(snap.ranked[i].depth));
    });
    expect(view.ranked.map((r) => r.rank)).toEqual([1, 2]);
  });

  it("passes the answer through untouched", () => {
    const snap = snapshot();
    expect(deriveView(snap).answer).toBe(snap.answer);
  });

  it("depth formatting is lossless for round numbers", () => {
    expect(formatDepth(1.5)).toBe("1.5");
    expect(formatDepth(3)).toBe("3");
    expect(formatDepth(6.000001)).toBe("6.000001");
  });
});

describe("gate visibility", () => {
  it("never shows ranked objects before the gate opens", () => {
    for (const state of ["idle", "buffering", "failed"]) {
      const view = deriveView(snapshot({ state }));
      expect(view.ranked).toEqual([]);
      expect(view.canQuery).toBe(false);
    }
  });

  it("shows ranked objects once gated or answered", () => {
    expect(deriveView(snapshot({ state: "gated" })).ranked).toHaveLength(2);
    expect(deriveView(snapshot({ state: "answered" })).ranked).toHaveLength(2);
  });

  it("state drives the action gating", () => {
    const idle = deriveView(snapshot({ state: "idle", ranked: [] }));
    expect(idle.canTrigger).toBe(true);
    expect(idle.canPushFrames).toBe(false);
    const buffering = deriveView(snapshot({ state: "buffering", ranked: [] }));
    expect(buffering.canTrigger).toBe(false);
    expect(buffering.canPushFrames).toBe(true);
  });
});

describe("error banner", () => {
  it("surfaces the wire error code and retriability", () => {
    const view = deriveView(
      snapshot({
        state: "failed",
        error: { code: "gate_timeout", message: "no gate after 60 frames", retriable: true },
      }),
    );
    expect(view.errorBanner).toContain("gate_timeout");
    expect(view.errorBanner).toContain("retriable");
  });

  it("is empty without an error", () => {
    expect(deriveView(snapshot()).errorBanner).toBeNull();
  });
});
