/**
 * Overlay state and rendering for the workbench canvas.
 *
 * Mask fills use the same color convention as the server's overlay
 * renderer — word green, line blue, paragraph orange — blended at the
 * same opacity with one final truncation to 8 bits per pixel, so the two
 * renderers agree exactly on blended values. Pixel-level text gets its
 * own magenta, outside that three-color convention.
 */

import type { PromptPayload } from "./api.js";
import { decode } from "./rle.js";

export type Level = "pixel" | "word" | "line" | "paragraph";

export const LEVEL_COLORS: Record<Level, [number, number, number]> = {
  pixel: [200, 0, 200],
  word: [0, 200, 0],
  line: [40, 110, 255],
  paragraph: [255, 160, 30],
};

export const OVERLAY_ALPHA = 0.45;

/** Paint order, bottom to top: coarser hierarchy first. */
export const LEVEL_ORDER: Level[] = ["pixel", "paragraph", "line", "word"];

export interface MaskLayer {
  level: Level;
  /** Flat row-major 0/1 buffer, length width*height. */
  pixels: Uint8Array;
}

/**
 * Blend layers onto an RGBA image. The blend accumulates in floats and
 * truncates once at the end, so stacked layers never pick up
 * intermediate quantization. Alpha channel is left untouched. Returns a
 * new buffer; the base is not modified.
 */
export function renderOverlay(
  base: Uint8ClampedArray,
  width: number,
  height: number,
  layers: MaskLayer[],
  alpha: number = OVERLAY_ALPHA,
): Uint8ClampedArray {
  const n = width * height;
  if (base.length !== n * 4) {
    throw new Error(
      `base RGBA length ${base.length} does not match ${width}x${height}`,
    );
  }
  const out = new Uint8ClampedArray(base);
  const acc = new Float64Array(n * 3);
  for (let i = 0; i < n; i++) {
    acc[i * 3] = base[i * 4]!;
    acc[i * 3 + 1] = base[i * 4 + 1]!;
    acc[i * 3 + 2] = base[i * 4 + 2]!;
  }
  const ordered = [...layers].sort(
    (a, b) => LEVEL_ORDER.indexOf(a.level) - LEVEL_ORDER.indexOf(b.level),
  );
  for (const layer of ordered) {
    if (layer.pixels.length !== n) {
      throw new Error(
        `layer "${layer.level}" has ${layer.pixels.length} pixels, expected ${n}`,
      );
    }
    const [r, g, b] = LEVEL_COLORS[layer.level];
    for (let i = 0; i < n; i++) {
      if (layer.pixels[i]) {
        acc[i * 3] = (1 - alpha) * acc[i * 3]! + alpha * r;
        acc[i * 3 + 1] = (1 - alpha) * acc[i * 3 + 1]! + alpha * g;
        acc[i * 3 + 2] = (1 - alpha) * acc[i * 3 + 2]! + alpha * b;
      }
    }
  }
  for (let i = 0; i < n; i++) {
    out[i * 4] = Math.floor(acc[i * 3]!);
    out[i * 4 + 1] = Math.floor(acc[i * 3 + 1]!);
    out[i * 4 + 2] = Math.floor(acc[i * 3 + 2]!);
  }
  return out;
}

export interface ClickRecord {
  x: number;
  y: number;
  payload: PromptPayload;
}

/**
 * Overlay state for prompt mode: the latest click's word/line/paragraph
 * layers plus a replayable click history. Exactly one hierarchy level is
 * active (highlighted) at a time; the view may still stack all layers.
 */
export class OverlayState {
  activeLevel: Level = "line";
  readonly clickHistory: ClickRecord[] = [];
  private layerMap = new Map<Level, MaskLayer>();

  constructor(readonly size: number) {}

  /**
   * Replace the displayed layers with this prompt's masks (repeated
   * clicks never stack duplicates) and record the click. Returns whether
   * a word was found under the click.
   */
  applyPrompt(payload: PromptPayload): boolean {
    this.clickHistory.push({
      x: payload.click[0],
      y: payload.click[1],
      payload,
    });
    this.layerMap = this.layersFrom(payload);
    return payload.word !== null;
  }

  private layersFrom(payload: PromptPayload): Map<Level, MaskLayer> {
    const layers = new Map<Level, MaskLayer>();
    layers.set("paragraph", {
      level: "paragraph",
      pixels: decode(payload.paragraph.rle),
    });
    layers.set("line", { level: "line", pixels: decode(payload.line.rle) });
    if (payload.word !== null) {
      layers.set("word", { level: "word", pixels: decode(payload.word.rle) });
    }
    return layers;
  }

  /** The single active layer, if the latest prompt produced one. */
  activeLayers(): MaskLayer[] {
    const layer = this.layerMap.get(this.activeLevel);
    return layer === undefined ? [] : [layer];
  }

  /** All layers of the latest prompt in paint order. */
  allLayers(): MaskLayer[] {
    return LEVEL_ORDER.flatMap((level) => {
      const layer = this.layerMap.get(level);
      return layer === undefined ? [] : [layer];
    });
  }

  /** Rebuild an equivalent state purely from the click history. */
  replay(): OverlayState {
    const fresh = new OverlayState(this.size);
    fresh.activeLevel = this.activeLevel;
    for (const click of this.clickHistory) {
      fresh.applyPrompt(click.payload);
    }
    return fresh;
  }
}
