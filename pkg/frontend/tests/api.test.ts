import { describe, expect, it } from "vitest";

import {
  ApiError,
  TextHierClient,
  type FetchLike,
  type SessionInfo,
} from "../src/api.js";
import { bytesEqual, fixtureBytes, jsonResponse } from "./helpers.js";

interface Call {
  url: string;
  init: RequestInit | undefined;
}

function recordingFetch(
  responder: (url: string, init?: RequestInit) => Response | Promise<Response>,
): { fetch: FetchLike; calls: Call[] } {
  const calls: Call[] = [];
  const fetchFn: FetchLike = async (url, init) => {
    calls.push({ url, init });
    return responder(url, init);
  };
  return { fetch: fetchFn, calls };
}

describe("session creation", () => {
  it("posts the raw image bytes and parses the reply", async () => {
    const { fetch: fetchFn, calls } = recordingFetch(() =>
      jsonResponse(fixtureBytes("session_create")),
    );
    const client = new TextHierClient("http://svc/", fetchFn);
    const image = new Uint8Array([137, 80, 78, 71]);
    const info: SessionInfo = await client.createSession(image);
    expect(calls).toHaveLength(1);
    expect(calls[0]!.url).toBe("http://svc/sessions");
    expect(calls[0]!.init?.method).toBe("POST");
    expect(calls[0]!.init?.body).toBe(image);
    expect(info.session_id).toMatch(/^[0-9a-f]{32}$/);
    expect(info.version).toBe(1);
    expect(info.input_size).toBe(256);
  });

  it("maps error bodies onto ApiError", async () => {
    const { fetch: fetchFn } = recordingFetch(() =>
      jsonResponse(new TextEncoder().encode('{"detail":"undecodable image"}'), 422),
    );
    const client = new TextHierClient("http://svc", fetchFn);
    const err = await client.createSession(new Uint8Array()).catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(422);
    expect(err.detail).toBe("undecodable image");
  });

  it("survives non-JSON error bodies", async () => {
    const { fetch: fetchFn } = recordingFetch(
      () => new Response("boom", { status: 500, statusText: "Internal Error" }),
    );
    const client = new TextHierClient("http://svc", fetchFn);
    const err = await client.createSession(new Uint8Array([1])).catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(500);
  });
});

describe("prompting", () => {
  it("sends the click as JSON", async () => {
    const { fetch: fetchFn, calls } = recordingFetch(() =>
      jsonResponse(fixtureBytes("prompt_click")),
    );
    const client = new TextHierClient("http://svc", fetchFn);
    const payload = await client.prompt("abc", 60, 30);
    expect(calls[0]!.url).toBe("http://svc/sessions/abc/prompt");
    expect(JSON.parse(calls[0]!.init?.body as string)).toEqual({ x: 60, y: 30 });
    expect(payload.word).not.toBeNull();
    expect(payload.line.rle.size).toEqual([256, 256]);
  });

  it("a new click cancels the in-flight prompt", async () => {
    let callCount = 0;
    const { fetch: fetchFn, calls } = recordingFetch((_url, init) => {
      callCount += 1;
      if (callCount === 1) {
        return new Promise<Response>((_resolve, reject) => {
          init?.signal?.addEventListener("abort", () =>
            reject(new DOMException("aborted", "AbortError")),
          );
        });
      }
      return jsonResponse(fixtureBytes("prompt_click"));
    });
    const client = new TextHierClient("http://svc", fetchFn);
    const first = client.prompt("abc", 10, 10);
    const second = client.prompt("abc", 60, 30);
    const firstErr = await first.catch((e) => e);
    expect(firstErr).toBeInstanceOf(DOMException);
    expect((firstErr as DOMException).name).toBe("AbortError");
    expect(calls[0]!.init?.signal?.aborted).toBe(true);
    const payload = await second;
    expect(payload.click).toEqual([60.0, 30.0]);
    expect(calls[1]!.init?.signal?.aborted).toBe(false);
  });
});

describe("mask generation and labels", () => {
  it("passes only the provided generation options", async () => {
    const { fetch: fetchFn, calls } = recordingFetch(() =>
      jsonResponse(fixtureBytes("amg")),
    );
    const client = new TextHierClient("http://svc", fetchFn);
    const dump = await client.runAmg("abc", { points: 40, seed: 0 });
    expect(JSON.parse(calls[0]!.init?.body as string)).toEqual({
      points: 40,
      seed: 0,
    });
    expect(dump.lines).toHaveLength(2);
    expect(dump.version).toBe(2);
    expect(dump.layout.slice().sort()).toEqual([0, 1]);
  });

  it("sends label edits with the version token", async () => {
    const { fetch: fetchFn, calls } = recordingFetch(() =>
      jsonResponse(fixtureBytes("patch_accept_all")),
    );
    const client = new TextHierClient("http://svc", fetchFn);
    const resp = await client.patchLabels("abc", 2, [
      { action: "accept", level: "line", index: 0 },
    ]);
    expect(calls[0]!.init?.method).toBe("PATCH");
    expect(JSON.parse(calls[0]!.init?.body as string)).toEqual({
      version: 2,
      edits: [{ action: "accept", level: "line", index: 0 }],
    });
    expect(resp.version).toBe(3);
  });
});

describe("export", () => {
  it("returns the exact response bytes, not a reserialization", async () => {
    // The server writes floats Python-style ("60.0"); any JSON round trip
    // in the client would destroy that. Byte equality proves pass-through.
    const serverBytes = fixtureBytes("export_accept_all");
    const { fetch: fetchFn } = recordingFetch(() => jsonResponse(serverBytes));
    const client = new TextHierClient("http://svc", fetchFn);
    const result = await client.exportLabels("abc");
    expect(bytesEqual(result.bytes, serverBytes)).toBe(true);
    const reserialized = new TextEncoder().encode(JSON.stringify(result.data));
    expect(bytesEqual(reserialized, serverBytes)).toBe(false);
    expect(result.data.paragraphs.length).toBeGreaterThan(0);
  });
});
