/**
 * Typed client for the session HTTP/JSON API.
 *
 * The fetch implementation is injectable so tests and non-browser hosts
 * can supply their own; all errors surface as ApiError with the server's
 * machine-readable code when one is available.
 */

import { RleMask } from "./rle.js";

export interface SessionInfo {
  session_id: string;
  dims: number[];
  status: string;
  round: number;
  quota: number;
}

export interface Proposal {
  index: number;
  mass: number | null;
}

export interface Guidance {
  is_first: boolean;
  proposals: Record<string, Proposal[]>;
}

export interface Bundle {
  dims: number[];
  plane: number;
  index: number;
  image: string; // base64 little-endian float32, row-major
  image_shape: number[];
  proxy_overlay: RleMask;
  pred_overlay: RleMask;
  gamma: Record<string, number[]>;
  round: number;
  status: string;
  guidance: Guidance;
}

export interface AnnotationResult {
  round: number;
  status: string;
  dice_proxy_pred: number;
  labor_fraction: number;
  guidance: Guidance | Record<string, never>;
}

export interface SessionMetrics {
  round: number;
  status: string;
  gamma_count: number;
  labor_fraction: number;
  dice_proxy_pred: number;
  loss_history: number[];
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function asJson<T>(resp: Response): Promise<T> {
  const body = await resp.json().catch(() => ({}));
  if (!resp.ok) {
    const code = typeof body.code === "string" ? body.code : "http_error";
    const message = typeof body.message === "string" ? body.message : resp.statusText;
    throw new ApiError(resp.status, code, message);
  }
  return body as T;
}

export class Client {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private post<T>(path: string, payload: unknown): Promise<T> {
    return this.fetchImpl(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    }).then((r) => asJson<T>(r));
  }

  createPhantomSession(spec: Record<string, unknown>): Promise<SessionInfo> {
    return this.post("/sessions", { phantom: spec });
  }

  createVolumeSession(dims: number[], dataB64: string): Promise<SessionInfo> {
    return this.post("/sessions", { volume: { dims, data: dataB64 } });
  }

  getBundle(sessionId: string, plane: number, index: number): Promise<Bundle> {
    return this.fetchImpl(
      `${this.baseUrl}/sessions/${sessionId}/bundle?plane=${plane}&index=${index}`,
    ).then((r) => asJson<Bundle>(r));
  }

  submitAnnotation(
    sessionId: string,
    plane: number,
    index: number,
    mask: RleMask,
    idempotencyKey?: string,
  ): Promise<AnnotationResult> {
    const payload: Record<string, unknown> = { plane, index, mask };
    if (idempotencyKey !== undefined) payload.idempotency_key = idempotencyKey;
    return this.post(`/sessions/${sessionId}/annotations`, payload);
  }

  getMetrics(sessionId: string): Promise<SessionMetrics> {
    return this.fetchImpl(`${this.baseUrl}/sessions/${sessionId}/metrics`).then((r) =>
      asJson<SessionMetrics>(r),
    );
  }

  deleteSession(sessionId: string): Promise<{ deleted: boolean }> {
    return this.fetchImpl(`${this.baseUrl}/sessions/${sessionId}`, {
      method: "DELETE",
    }).then((r) => asJson<{ deleted: boolean }>(r));
  }
}

/** Decode the bundle's base64 little-endian float32 slice image. */
export function decodeSliceImage(b64: string, height: number, width: number): Float32Array {
  const nodeBuffer = (
    globalThis as { Buffer?: { from(s: string, enc: string): Uint8Array } }
  ).Buffer;
  let bytes: Uint8Array;
  if (typeof atob === "function") {
    const raw = atob(b64);
    bytes = new Uint8Array(raw.length);
    for (let i = 0; i < raw.length; i++) bytes[i] = raw.charCodeAt(i);
  } else if (nodeBuffer) {
    bytes = Uint8Array.from(nodeBuffer.from(b64, "base64"));
  } else {
    throw new Error("no base64 decoder available");
  }
  if (bytes.byteLength !== height * width * 4) {
    throw new Error(
      `slice payload holds ${bytes.byteLength} bytes, expected ${height * width * 4}`,
    );
  }
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  const out = new Float32Array(height * width);
  for (let i = 0; i < out.length; i++) out[i] = view.getFloat32(i * 4, true);
  return out;
}
