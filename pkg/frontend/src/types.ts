/** Wire types mirroring the assistant service's JSON payloads. */

export interface DetectionWire {
  label: string;
  bbox: [number, number, number, number];
  confidence: number;
}

export interface SyntheticDepthRegion {
  bbox: [number, number, number, number];
  value: number;
}

export interface SyntheticDepth {
  width: number;
  height: number;
  background?: number;
  regions?: SyntheticDepthRegion[];
}

export interface DepthWire {
  synthetic?: SyntheticDepth;
  b64?: string;
  path?: string;
}

export interface FrameWire {
  detections: DetectionWire[];
  depth?: DepthWire;
  frame_index?: number;
}

export interface SessionConfigWire {
  window?: number;
  conf_threshold?: number;
  fuse_iou?: number;
  min_votes?: number;
  top_k?: number;
  frame_budget?: number;
  per_object_m?: number;
}

export interface RankedObjectWire {
  label: string;
  bbox: [number, number, number, number];
  depth: number;
  confidence: number;
  votes: number;
}

export interface ContextMatchWire {
  part_id: string;
  display_name: string;
  distance: number;
}

export interface ContextBlockWire {
  label: string;
  depth: number;
  no_knowledge: boolean;
  matches: ContextMatchWire[];
}

export interface SessionCreated {
  session_id: string;
  state: string;
  config: Record<string, number>;
}

export interface FrameResponse {
  state: string;
  frame_index: number;
  frames_buffered: number;
  gated: boolean;
  error: { code: string; message: string; retriable: boolean } | null;
}

export interface QueryResponse {
  answer: string;
  ranked: RankedObjectWire[];
  context: ContextBlockWire[];
  state: string;
}

export interface SessionSnapshot {
  session_id: string;
  state: string;
  config: Record<string, number>;
  frames_seen: number;
  frames_buffered: number;
  ranked: RankedObjectWire[];
  context: ContextBlockWire[];
  answer: string | null;
  error: { code: string; message: string; retriable: boolean } | null;
}

export interface ApiError {
  code: string;
  message: string;
  retriable: boolean;
}

/** Scenario file schema shared with the headless simulator. */
export interface Scenario {
  name?: string;
  config?: SessionConfigWire;
  frames: FrameWire[];
  queries?: string[];
  knowledge_base?: unknown[];
}
