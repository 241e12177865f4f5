/**
 * Thin client over the editing service.  Every number shown in the UI
 * originates from one of these responses; the client itself never runs
 * model math.
 */

import { AnnotationDocument } from "./annotations";

export interface SessionInfo {
  session_id: string;
  width: number;
  height: number;
}

export interface OptimizationResponse {
  code: number[];
  objective_trace: number[];
  best_step: number;
  best_objective: number;
}

export interface PreviewResponse {
  etag: string;
  from: number;
  count: number;
  total: number;
  frames: string[]; // base64 PNGs
}

export interface SessionState {
  session_id: string;
  revision: number;
  width: number;
  height: number;
  motion_code: number[];
  appearance_codes: number[][];
  motion_trace: number[];
  appearance_trace: number[];
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ServiceClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = fetch,
  ) {}

  private async request(path: string, init?: RequestInit): Promise<unknown> {
    const resp = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    if (!resp.ok) {
      let detail = `${resp.status}`;
      try {
        const body = (await resp.json()) as { detail?: string };
        if (body.detail) detail = `${resp.status}: ${body.detail}`;
      } catch {
        // non-JSON error body; status alone is fine
      }
      throw new Error(`service error ${detail}`);
    }
    return resp.json();
  }

  async createSession(imageBlob: Blob, filename = "upload.png"): Promise<SessionInfo> {
    const form = new FormData();
    form.append("image", imageBlob, filename);
    return (await this.request("/sessions", {
      method: "POST",
      body: form,
    })) as SessionInfo;
  }

  async submitMotionAnnotation(
    sessionId: string,
    doc: AnnotationDocument,
  ): Promise<OptimizationResponse> {
    return (await this.request(`/sessions/${sessionId}/annotations/motion`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(doc),
    })) as OptimizationResponse;
  }

  async submitAppearanceAnnotation(
    sessionId: string,
    doc: AnnotationDocument,
  ): Promise<OptimizationResponse> {
    return (await this.request(`/sessions/${sessionId}/annotations/appearance`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(doc),
    })) as OptimizationResponse;
  }

  async fetchPreview(
    sessionId: string,
    opts: { from?: number; count?: number; w?: number; h?: number } = {},
  ): Promise<PreviewResponse> {
    const params = new URLSearchParams();
    if (opts.from !== undefined) params.set("frm", String(opts.from));
    if (opts.count !== undefined) params.set("count", String(opts.count));
    if (opts.w !== undefined) params.set("w", String(opts.w));
    if (opts.h !== undefined) params.set("h", String(opts.h));
    const query = params.toString();
    return (await this.request(
      `/sessions/${sessionId}/preview${query ? `?${query}` : ""}`,
    )) as PreviewResponse;
  }

  async fetchState(sessionId: string): Promise<SessionState> {
    return (await this.request(`/sessions/${sessionId}/state`)) as SessionState;
  }
}
