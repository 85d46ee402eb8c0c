import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { replayScenario } from "../src/replay.js";
import type { Scenario } from "../src/types.js";

/** In-memory service double implementing just the routes the client uses. */
function fakeService(gateAfter: number) {
  let state = "idle";
  let frames = 0;
  const ranked = [
    { label: "gear", bbox: [0, 0, 10, 10] as [number, number, number, number],
      depth: 1.0, confidence: 0.9, votes: gateAfter },
  ];
  const json = (body: unknown, status = 200) =>
    new Response(JSON.stringify(body), {
      status,
      headers: { "content-type": "application/json" },
    });

  const fetchFn: typeof fetch = async (input, init) => {
    const url = String(input);
    const method = init?.method ?? "GET";
    if (url.endsWith("/sessions") && method === "POST") {
      state = "idle";
      frames = 0;
      return json({ session_id: "s0001", state, config: {} }, 201);
    }
    if (url.endsWith("/trigger")) {
      state = "buffering";
      return json({ session_id: "s0001", state });
    }
    if (url.endsWith("/frames")) {
      frames += 1;
      if (frames >= gateAfter) state = "gated";
      return json({
        state,
        frame_index: frames - 1,
        frames_buffered: Math.min(frames, gateAfter),
        gated: state === "gated",
        error: null,
      });
    }
    if (url.endsWith("/query")) {
      state = "answered";
      return json({ answer: "gear is closest", ranked, context: [], state });
    }
    // snapshot
    return json({
      session_id: "s0001",
      state,
      config: {},
      frames_seen: frames,
      frames_buffered: Math.min(frames, gateAfter),
      ranked: state === "gated" || state === "answered" ? ranked : [],
      context: [],
      answer: null,
      error: null,
    });
  };
  return new ApiClient("http://fake", fetchFn);
}

const scenario: Scenario = {
  name: "unit",
  config: { window: 3 },
  frames: Array.from({ length: 6 }, () => ({
    detections: [{ label: "gear", bbox: [0, 0, 10, 10], confidence: 0.9 }],
  })),
  queries: ["which part"],
};

describe("replayScenario", () => {
  it("stops pushing frames once the gate opens", async () => {
    const result = await replayScenario(fakeService(3), scenario);
    expect(result.frames).toHaveLength(3);
    expect(result.gateFrameIndex).toBe(2);
    expect(result.finalState).toBe("answered");
  });

  it("collects ranked objects and answers", async () => {
    const result = await replayScenario(fakeService(2), scenario);
    expect(result.ranked.map((r) => r.label)).toEqual(["gear"]);
    expect(result.answers).toHaveLength(1);
    expect(result.answers[0].response.answer).toBe("gear is closest");
  });

  it("reports observer events in order", async () => {
    const events: string[] = [];
    await replayScenario(fakeService(2), scenario, (e) => events.push(e));
    expect(events[0]).toContain("created");
    expect(events[1]).toBe("trigger pressed");
    expect(events.at(-1)).toContain("answered");
  });

  it("skips queries when the scenario never gates", async () => {
    const short: Scenario = { ...scenario, frames: scenario.frames.slice(0, 1) };
    const result = await replayScenario(fakeService(5), short);
    expect(result.gateFrameIndex).toBeNull();
    expect(result.answers).toHaveLength(0);
  });
});
