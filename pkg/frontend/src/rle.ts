/**
 * Run-length codec for binary masks, bit-compatible with the service's
 * wire format: row-major scan, alternating run lengths starting with the
 * run of zeros (an explicit leading 0 when the first pixel is set),
 * space-joined in a single string.
 */

export interface Rle {
  size: [number, number]; // [height, width]
  counts: string;
}

export class RleError extends Error {}

/** Decode to a flat row-major Uint8Array of 0/1, length height*width. */
export function decode(rle: Rle): Uint8Array {
  if (!Array.isArray(rle.size) || rle.size.length !== 2) {
    throw new RleError(`malformed RLE size: ${JSON.stringify(rle.size)}`);
  }
  const [h, w] = rle.size;
  if (!Number.isInteger(h) || !Number.isInteger(w) || h < 0 || w < 0) {
    throw new RleError(`malformed RLE size: ${JSON.stringify(rle.size)}`);
  }
  if (typeof rle.counts !== "string") {
    throw new RleError("RLE counts must be a string");
  }
  const trimmed = rle.counts.trim();
  const tokens = trimmed === "" ? [] : trimmed.split(/\s+/);
  const counts = tokens.map((tok) => {
    const n = Number(tok);
    if (!Number.isInteger(n)) {
      throw new RleError(`malformed RLE run "${tok}"`);
    }
    if (n < 0) {
      throw new RleError("RLE counts must be non-negative");
    }
    return n;
  });
  const total = h * w;
  const sum = counts.reduce((a, b) => a + b, 0);
  if (sum !== total) {
    throw new RleError(`RLE counts sum to ${sum}, expected ${total} for size ${h}x${w}`);
  }
  const out = new Uint8Array(total);
  let pos = 0;
  let value = 0;
  for (const run of counts) {
    if (value) {
      out.fill(1, pos, pos + run);
    }
    pos += run;
    value ^= 1;
  }
  return out;
}

/** Encode a flat row-major 0/1 (or truthy) pixel buffer. */
export function encode(
  pixels: ArrayLike<number>,
  height: number,
  width: number,
): Rle {
  if (!Number.isInteger(height) || !Number.isInteger(width) || height < 0 || width < 0) {
    throw new RleError(`bad mask shape ${height}x${width}`);
  }
  if (pixels.length !== height * width) {
    throw new RleError(
      `pixel buffer length ${pixels.length} does not match ${height}x${width}`,
    );
  }
  const total = height * width;
  if (total === 0) {
    return { size: [height, width], counts: "" };
  }
  const counts: number[] = [];
  if (pixels[0]) {
    counts.push(0);
  }
  let run = 1;
  for (let i = 1; i < total; i++) {
    if (Boolean(pixels[i]) === Boolean(pixels[i - 1])) {
      run += 1;
    } else {
      counts.push(run);
      run = 1;
    }
  }
  counts.push(run);
  return { size: [height, width], counts: counts.join(" ") };
}
