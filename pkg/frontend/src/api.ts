/** Thin typed client for the assistant HTTP JSON API. */

import type {
  ApiError,
  FrameResponse,
  FrameWire,
  QueryResponse,
  SessionConfigWire,
  SessionCreated,
  SessionSnapshot,
} from "./types.js";

export class ServiceError extends Error {
  constructor(
    public readonly code: string,
    message: string,
    public readonly retriable: boolean,
    public readonly status: number,
  ) {
    super(message);
  }
}

async function parseError(resp: Response): Promise<never> {
  let body: Partial<ApiError> = {};
  try {
    body = (await resp.json()) as Partial<ApiError>;
  } catch {
    // non-JSON error body; fall through to the defaults
  }
  throw new ServiceError(
    body.code ?? "http_error",
    body.message ?? `HTTP ${resp.status}`,
    body.retriable ?? false,
    resp.status,
  );
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private async post<T>(path: string, body?: unknown): Promise<T> {
    const resp = await this.fetchFn(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: body === undefined ? "{}" : JSON.stringify(body),
    });
    if (!resp.ok) await parseError(resp);
    return (await resp.json()) as T;
  }

  async createSession(config?: SessionConfigWire): Promise<SessionCreated> {
    return this.post<SessionCreated>("/sessions", { config: config ?? {} });
  }

  async trigger(sessionId: string): Promise<{ session_id: string; state: string }> {
    return this.post(`/sessions/${sessionId}/trigger`);
  }

  async pushFrame(sessionId: string, frame: FrameWire): Promise<FrameResponse> {
    return this.post<FrameResponse>(`/sessions/${sessionId}/frames`, frame);
  }

  async pushImageFrame(
    sessionId: string,
    image: Blob,
    imageId?: string,
    depth?: Blob,
  ): Promise<FrameResponse> {
    const form = new FormData();
    form.append("image", image, imageId ? `${imageId}.png` : "frame.png");
    if (imageId) form.append("image_id", imageId);
    if (depth) form.append("depth", depth, "depth.dpth");
    const resp = await this.fetchFn(`${this.baseUrl}/sessions/${sessionId}/frames`, {
      method: "POST",
      body: form,
    });
    if (!resp.ok) await parseError(resp);
    return (await resp.json()) as FrameResponse;
  }

  async query(sessionId: string, q: string): Promise<QueryResponse> {
    return this.post<QueryResponse>(`/sessions/${sessionId}/query`, { q });
  }

  async snapshot(sessionId: string): Promise<SessionSnapshot> {
    const resp = await this.fetchFn(`${this.baseUrl}/sessions/${sessionId}`);
    if (!resp.ok) await parseError(resp);
    return (await resp.json()) as SessionSnapshot;
  }

  async health(): Promise<{ status: string }> {
    const resp = await this.fetchFn(`${this.baseUrl}/healthz`);
    if (!resp.ok) await parseError(resp);
    return (await resp.json()) as { status: string };
  }
}
