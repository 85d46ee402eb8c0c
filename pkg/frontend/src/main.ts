/** Operator console wiring: session lifecycle, frame stepping, overlays,
 * question box. All pipeline numbers come from the service; this file only
 * renders them and forwards user actions.
 */

import { ApiClient, ServiceError } from "./api.js";
import { bboxToBox, fitTransform, toDisplay } from "./overlay.js";
import { replayScenario } from "./replay.js";
import type { FrameWire, Scenario, SessionConfigWire, SessionSnapshot } from "./types.js";
import { deriveView } from "./viewmodel.js";

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

const client = new ApiClient("");
let sessionId: string | null = null;
let scenario: Scenario | null = null;
let nextFrame = 0;
let lastFrameSize: [number, number] = [160, 160];

function readConfig(): SessionConfigWire {
  const config: SessionConfigWire = {};
  const num = (id: string) => Number(($(id) as unknown as HTMLInputElement).value);
  if (num("cfg-window") > 0) config.window = num("cfg-window");
  const conf = num("cfg-conf");
  if (conf >= 0 && conf <= 1) config.conf_threshold = conf;
  const iou = num("cfg-iou");
  if (iou >= 0 && iou <= 1) config.fuse_iou = iou;
  if (num("cfg-topk") > 0) config.top_k = num("cfg-topk");
  return config;
}

function banner(message: string | null) {
  const el = $("error-banner");
  if (!message) {
    el.hidden = true;
    return;
  }
  $("error-text").textContent = message;
  el.hidden = false;
}

function describeError(err: unknown): string {
  if (err instanceof ServiceError) {
    return `${err.code}: ${err.message}${err.retriable ? " — you can retry" : ""}`;
  }
  return String(err);
}

function frameDims(frame: FrameWire | undefined): [number, number] {
  if (frame?.depth?.synthetic) {
    return [frame.depth.synthetic.width, frame.depth.synthetic.height];
  }
  return lastFrameSize;
}

function drawOverlay(snapshot: SessionSnapshot, frame?: FrameWire) {
  const canvas = $("frame-canvas") as unknown as HTMLCanvasElement;
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const [imgW, imgH] = frameDims(frame);
  lastFrameSize = [imgW, imgH];
  const t = fitTransform(imgW, imgH, canvas.width, canvas.height);

  ctx.fillStyle = "#1d232a";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  ctx.strokeStyle = "#39424e";
  ctx.strokeRect(t.offsetX, t.offsetY, imgW * t.scale, imgH * t.scale);

  const view = deriveView(snapshot);
  const boxes = view.ranked.length
    ? view.ranked.map((r) => ({ bbox: r.bbox, tag: `#${r.rank} ${r.label}` }))
    : (frame?.detections ?? []).map((d) => ({ bbox: d.bbox, tag: d.label }));
  ctx.lineWidth = 2;
  ctx.font = "12px system-ui, sans-serif";
  for (const [i, { bbox, tag }] of boxes.entries()) {
    const rect = toDisplay(t, bboxToBox(bbox));
    ctx.strokeStyle = view.ranked.length ? "#5cc8ff" : "#8a93a0";
    ctx.strokeRect(rect.x0, rect.y0, rect.x1 - rect.x0, rect.y1 - rect.y0);
    ctx.fillStyle = "#5cc8ff";
    ctx.fillText(tag, rect.x0 + 3, Math.max(12, rect.y0 - 4) + (i === 0 ? 0 : 0));
  }
}

async function refresh(frame?: FrameWire) {
  if (!sessionId) return;
  const snapshot = await client.snapshot(sessionId);
  const view = deriveView(snapshot);

  $("session-id").textContent = view.sessionId;
  $("state-badge").textContent = view.stateBadge;
  $("state-badge").dataset.state = snapshot.state;
  $("frame-counter").textContent =
    `${view.framesSeen} seen / ${view.framesBuffered} buffered`;
  ($("btn-trigger") as unknown as HTMLButtonElement).disabled = !view.canTrigger;
  ($("btn-step") as unknown as HTMLButtonElement).disabled =
    !view.canPushFrames || !scenario;
  ($("btn-play") as unknown as HTMLButtonElement).disabled =
    !view.canPushFrames || !scenario;
  ($("btn-ask") as unknown as HTMLButtonElement).disabled = !view.canQuery;

  const rankedList = $("ranked-list");
  rankedList.innerHTML = "";
  for (const row of view.ranked) {
    const li = document.createElement("li");
    li.textContent =
      `#${row.rank} ${row.label} — depth ${row.depthText}, ` +
      `conf ${row.confidenceText}, votes ${row.votes}`;
    rankedList.appendChild(li);
  }

  const contextList = $("context-list");
  contextList.innerHTML = "";
  for (const row of view.context) {
    const li = document.createElement("li");
    li.textContent = `${row.label} (depth ${row.depthText}): ${row.entries.join("; ")}`;
    contextList.appendChild(li);
  }

  $("answer-box").textContent = view.answer ?? "";
  banner(view.errorBanner);
  drawOverlay(snapshot, frame);
}

async function newSession() {
  try {
    const created = await client.createSession(readConfig());
    sessionId = created.session_id;
    nextFrame = 0;
    banner(null);
    await refresh();
  } catch (err) {
    banner(describeError(err));
  }
}

async function stepFrame(): Promise<boolean> {
  if (!sessionId || !scenario || nextFrame >= scenario.frames.length) return false;
  const frame = scenario.frames[nextFrame];
  nextFrame += 1;
  try {
    const status = await client.pushFrame(sessionId, frame);
    await refresh(frame);
    return status.state === "buffering";
  } catch (err) {
    banner(describeError(err));
    return false;
  }
}

async function playAll() {
  // post frames until the gate badge flips (or the script runs out)
  let more = true;
  while (more && scenario && nextFrame < scenario.frames.length) {
    more = await stepFrame();
  }
}

function wireScenarioLoad() {
  const input = $("scenario-file") as unknown as HTMLInputElement;
  input.addEventListener("change", async () => {
    const file = input.files?.[0];
    if (!file) return;
    scenario = JSON.parse(await file.text()) as Scenario;
    nextFrame = 0;
    $("scenario-name").textContent = scenario.name ?? file.name;
    await refresh(scenario.frames[0]);
  });
}

function wireWebcam() {
  const video = $("webcam") as unknown as HTMLVideoElement;
  $("btn-webcam").addEventListener("click", async () => {
    try {
      const stream = await navigator.mediaDevices.getUserMedia({ video: true });
      video.srcObject = stream;
      video.hidden = false;
      await video.play();
    } catch (err) {
      banner(`webcam unavailable: ${String(err)}`);
    }
  });
  $("btn-capture").addEventListener("click", async () => {
    if (!sessionId || video.hidden) return;
    const canvas = document.createElement("canvas");
    canvas.width = video.videoWidth;
    canvas.height = video.videoHeight;
    canvas.getContext("2d")?.drawImage(video, 0, 0);
    const blob: Blob | null = await new Promise((res) => canvas.toBlob(res, "image/png"));
    if (!blob) return;
    try {
      await client.pushImageFrame(sessionId, blob);
      await refresh();
    } catch (err) {
      banner(describeError(err));
    }
  });
}

function wireActions() {
  $("btn-new-session").addEventListener("click", () => void newSession());
  $("btn-trigger").addEventListener("click", async () => {
    if (!sessionId) return;
    try {
      await client.trigger(sessionId);
      await refresh();
    } catch (err) {
      banner(describeError(err));
    }
  });
  $("btn-step").addEventListener("click", () => void stepFrame());
  $("btn-play").addEventListener("click", () => void playAll());
  $("btn-ask").addEventListener("click", async () => {
    if (!sessionId) return;
    const q = ($("question") as unknown as HTMLInputElement).value.trim();
    if (!q) return;
    try {
      await client.query(sessionId, q);
      await refresh();
    } catch (err) {
      banner(describeError(err));
    }
  });
  $("btn-replay").addEventListener("click", async () => {
    if (!scenario) return;
    try {
      const result = await replayScenario(client, scenario, (event) => {
        $("replay-log").textContent += event + "\n";
      });
      sessionId = result.sessionId;
      nextFrame = scenario.frames.length;
      await refresh(scenario.frames[scenario.frames.length - 1]);
    } catch (err) {
      banner(describeError(err));
    }
  });
  $("btn-dismiss").addEventListener("click", () => banner(null));
}

wireScenarioLoad();
wireWebcam();
wireActions();
void newSession();
