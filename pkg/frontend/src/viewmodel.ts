/** Pure derivation of the rendered view from API snapshots.
 *
 * Thin-client rule: nothing here computes pipeline values. Every number in
 * the view is an API value passed through (at most formatted), which the
 * tests enforce by comparing rendered fields against the snapshot verbatim.
 */

import type { ContextBlockWire, RankedObjectWire, SessionSnapshot } from "./types.js";

export interface RankedRow {
  rank: number;
  label: string;
  depth: number;
  depthText: string;
  confidence: number;
  confidenceText: string;
  votes: number;
  bbox: [number, number, number, number];
}

export interface ContextRow {
  label: string;
  depthText: string;
  entries: string[];
  noKnowledge: boolean;
}

export interface SessionView {
  sessionId: string;
  stateBadge: string;
  canTrigger: boolean;
  canPushFrames: boolean;
  canQuery: boolean;
  framesSeen: number;
  framesBuffered: number;
  ranked: RankedRow[];
  context: ContextRow[];
  answer: string | null;
  errorBanner: string | null;
}

export function formatDepth(depth: number): string {
  // shortest faithful decimal; no rounding that could mask API values
  return String(depth);
}

export function formatConfidence(confidence: number): string {
  return confidence.toFixed(2);
}

export function rankedRows(ranked: RankedObjectWire[]): RankedRow[] {
  return ranked.map((r, i) => ({
    rank: i + 1,
    label: r.label,
    depth: r.depth,
    depthText: formatDepth(r.depth),
    confidence: r.confidence,
    confidenceText: formatConfidence(r.confidence),
    votes: r.votes,
    bbox: r.bbox,
  }));
}

export function contextRows(context: ContextBlockWire[]): ContextRow[] {
  return context.map((block) => ({
    label: block.label,
    depthText: formatDepth(block.depth),
    noKnowledge: block.no_knowledge,
    entries: block.no_knowledge
      ? ["no knowledge"]
      : block.matches.map((m) => `${m.display_name || m.part_id} (d=${m.distance.toFixed(4)})`),
  }));
}

export function deriveView(snapshot: SessionSnapshot): SessionView {
  const gated = snapshot.state === "gated" || snapshot.state === "answered";
  return {
    sessionId: snapshot.session_id,
    stateBadge: snapshot.state.toUpperCase(),
    canTrigger: snapshot.state === "idle",
    canPushFrames: snapshot.state === "buffering",
    canQuery: gated,
    framesSeen: snapshot.frames_seen,
    framesBuffered: snapshot.frames_buffered,
    // ranked objects only ever render once the gate has opened
    ranked: gated ? rankedRows(snapshot.ranked) : [],
    context: contextRows(snapshot.context),
    answer: snapshot.answer,
    errorBanner: snapshot.error
      ? `${snapshot.error.code}: ${snapshot.error.message}` +
        (snapshot.error.retriable ? " (retriable)" : "")
      : null,
  };
}
