/** Scenario replay over the HTTP API.
 *
 * Drives a recorded scenario (the same JSON files the headless simulator
 * consumes) through a live service: create, trigger, push frames until the
 * gate decides, then run the query script. The console's "load scenario"
 * button and the UI/headless equivalence test both go through this path.
 */

import type { ApiClient } from "./api.js";
import type { FrameResponse, QueryResponse, RankedObjectWire, Scenario } from "./types.js";

export interface ReplayResult {
  sessionId: string;
  frames: FrameResponse[];
  gateFrameIndex: number | null;
  ranked: RankedObjectWire[];
  answers: { q: string; response: QueryResponse }[];
  finalState: string;
}

export type ReplayObserver = (event: string) => void;

export async function replayScenario(
  client: ApiClient,
  scenario: Scenario,
  observe: ReplayObserver = () => {},
): Promise<ReplayResult> {
  const created = await client.createSession(scenario.config ?? {});
  observe(`session ${created.session_id} created`);
  await client.trigger(created.session_id);
  observe("trigger pressed");

  const frames: FrameResponse[] = [];
  let gateFrameIndex: number | null = null;
  for (const frame of scenario.frames) {
    const status = await client.pushFrame(created.session_id, frame);
    frames.push(status);
    observe(`frame ${status.frame_index}: ${status.state}`);
    if (status.state === "gated") {
      gateFrameIndex = status.frame_index;
      break;
    }
    if (status.state === "failed") break;
  }

  const answers: { q: string; response: QueryResponse }[] = [];
  let ranked: RankedObjectWire[] = [];
  if (gateFrameIndex !== null) {
    const snapshot = await client.snapshot(created.session_id);
    ranked = snapshot.ranked;
    for (const q of scenario.queries ?? []) {
      const response = await client.query(created.session_id, q);
      answers.push({ q, response });
      observe(`answered: ${q}`);
    }
  }

  const finalState = (await client.snapshot(created.session_id)).state;
  return {
    sessionId: created.session_id,
    frames,
    gateFrameIndex,
    ranked,
    answers,
    finalState,
  };
}
