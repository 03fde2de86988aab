/**
 * Typed client for the annotation service. The workbench talks to the
 * model exclusively through these five endpoints; nothing here mutates
 * masks client-side.
 *
 * Export bytes are returned verbatim (never reparsed and reserialized),
 * so a downloaded file is byte-identical to the server response.
 */

import type { Rle } from "./rle.js";

export interface SessionInfo {
  session_id: string;
  version: number;
  input_size: number;
  original_size: [number, number];
}

export interface ScoredMask {
  rle: Rle;
  score: number;
}

export interface WordPayload {
  polygon: number[][];
  rle: Rle;
  score: number;
}

export interface PromptPayload {
  click: [number, number];
  word: WordPayload | null;
  line: ScoredMask;
  paragraph: ScoredMask;
}

export interface AmgLine {
  rle: Rle;
  score: number;
  decayed_score: number;
}

export interface AmgDump {
  image_id: string;
  input_size: number;
  original_size: [number, number];
  pixel_text: Rle;
  lines: AmgLine[];
  words: WordPayload[][];
  paragraphs: Rle[];
  layout: number[];
  version: number;
}

export interface AmgRequest {
  points?: number;
  point_batch?: number;
  seed?: number;
}

export type EditAction = "accept" | "reject" | "set_polygon";
export type EditLevel = "line" | "word";

export interface EditOp {
  action: EditAction;
  level: EditLevel;
  index: number;
  polygon?: number[][];
}

export interface ExportWord {
  vertices: number[][];
  legible: boolean;
  text: string;
}

export interface ExportLine {
  vertices: number[][];
  legible: boolean;
  text: string;
  words: ExportWord[];
}

export interface ExportParagraph {
  vertices: number[][];
  legible: boolean;
  lines: ExportLine[];
}

export interface ExportDoc {
  image_id: string;
  image_width: number;
  image_height: number;
  paragraphs: ExportParagraph[];
  version: number;
}

export interface ExportResult {
  /** Exact response body; saved to disk untouched. */
  bytes: Uint8Array;
  data: ExportDoc;
}

export type FetchLike = (
  input: string,
  init?: RequestInit,
) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ApiError";
  }
}

export class TextHierClient {
  private readonly baseUrl: string;
  private readonly fetchFn: FetchLike;
  private promptAbort: AbortController | null = null;

  constructor(baseUrl: string, fetchFn?: FetchLike) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
  }

  async createSession(image: BodyInit): Promise<SessionInfo> {
    const resp = await this.fetchFn(`${this.baseUrl}/sessions`, {
      method: "POST",
      headers: { "content-type": "application/octet-stream" },
      body: image,
    });
    return this.parse<SessionInfo>(resp);
  }

  /**
   * Point prompt. A new click cancels any in-flight prompt request, so
   * responses can never arrive out of order.
   */
  async prompt(sessionId: string, x: number, y: number): Promise<PromptPayload> {
    this.promptAbort?.abort();
    const controller = new AbortController();
    this.promptAbort = controller;
    const resp = await this.fetchFn(
      `${this.baseUrl}/sessions/${sessionId}/prompt`,
      {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ x, y }),
        signal: controller.signal,
      },
    );
    return this.parse<PromptPayload>(resp);
  }

  async runAmg(sessionId: string, cfg: AmgRequest = {}): Promise<AmgDump> {
    const resp = await this.fetchFn(`${this.baseUrl}/sessions/${sessionId}/amg`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(cfg),
    });
    return this.parse<AmgDump>(resp);
  }

  async patchLabels(
    sessionId: string,
    version: number,
    edits: EditOp[],
  ): Promise<{ version: number }> {
    const resp = await this.fetchFn(
      `${this.baseUrl}/sessions/${sessionId}/labels`,
      {
        method: "PATCH",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ version, edits }),
      },
    );
    return this.parse<{ version: number }>(resp);
  }

  async exportLabels(sessionId: string): Promise<ExportResult> {
    const resp = await this.fetchFn(
      `${this.baseUrl}/sessions/${sessionId}/export`,
      { method: "GET" },
    );
    if (!resp.ok) {
      throw await this.toError(resp);
    }
    const bytes = new Uint8Array(await resp.arrayBuffer());
    const data = JSON.parse(new TextDecoder().decode(bytes)) as ExportDoc;
    return { bytes, data };
  }

  private async parse<T>(resp: Response): Promise<T> {
    if (!resp.ok) {
      throw await this.toError(resp);
    }
    return (await resp.json()) as T;
  }

  private async toError(resp: Response): Promise<ApiError> {
    let detail = resp.statusText || `status ${resp.status}`;
    try {
      const body: unknown = await resp.json();
      if (
        typeof body === "object" &&
        body !== null &&
        typeof (body as { detail?: unknown }).detail === "string"
      ) {
        detail = (body as { detail: string }).detail;
      }
    } catch {
      // non-JSON error body; keep the status text
    }
    return new ApiError(resp.status, detail);
  }
}
