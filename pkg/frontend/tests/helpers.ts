import { readFileSync } from "node:fs";
import { fileURLToPath } from "node:url";

/** Raw recorded service response bytes (exact wire bytes). */
export function fixtureBytes(name: string): Uint8Array {
  const path = fileURLToPath(new URL(`./fixtures/${name}.json`, import.meta.url));
  return new Uint8Array(readFileSync(path));
}

export function fixtureJson<T>(name: string): T {
  return JSON.parse(new TextDecoder().decode(fixtureBytes(name))) as T;
}

/** The RLE test vectors shared with the server's codec tests. */
export function sharedRleVectors(): Array<{
  name: string;
  size: [number, number];
  counts: string;
  pixels: number[];
}> {
  const path = fileURLToPath(
    new URL("../../tests/data/rle_vectors.json", import.meta.url),
  );
  return JSON.parse(readFileSync(path, "utf8"));
}

export function bytesEqual(a: Uint8Array, b: Uint8Array): boolean {
  if (a.length !== b.length) {
    return false;
  }
  for (let i = 0; i < a.length; i++) {
    if (a[i] !== b[i]) {
      return false;
    }
  }
  return true;
}

export function jsonResponse(bytes: Uint8Array, status = 200): Response {
  return new Response(bytes.slice().buffer, {
    status,
    headers: { "content-type": "application/json" },
  });
}
