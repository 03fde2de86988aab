import { describe, expect, it } from "vitest";

import type { PromptPayload } from "../src/api.js";
import {
  LEVEL_COLORS,
  LEVEL_ORDER,
  OVERLAY_ALPHA,
  OverlayState,
  renderOverlay,
  type Level,
  type MaskLayer,
} from "../src/overlay.js";
import { decode } from "../src/rle.js";
import { fixtureJson } from "./helpers.js";

const SIZE = 256;

/** Uniform gray base chosen so every overlay color changes every pixel. */
function grayBase(): Uint8ClampedArray {
  const base = new Uint8ClampedArray(SIZE * SIZE * 4);
  for (let i = 0; i < SIZE * SIZE; i++) {
    base[i * 4] = 120;
    base[i * 4 + 1] = 120;
    base[i * 4 + 2] = 120;
    base[i * 4 + 3] = 255;
  }
  return base;
}

function changedPixels(base: Uint8ClampedArray, out: Uint8ClampedArray): Set<number> {
  const changed = new Set<number>();
  for (let i = 0; i < SIZE * SIZE; i++) {
    for (let c = 0; c < 4; c++) {
      if (base[i * 4 + c] !== out[i * 4 + c]) {
        changed.add(i);
        break;
      }
    }
  }
  return changed;
}

function maskSet(pixels: Uint8Array): Set<number> {
  const set = new Set<number>();
  pixels.forEach((v, i) => {
    if (v) {
      set.add(i);
    }
  });
  return set;
}

const clickPayload = fixtureJson<PromptPayload>("prompt_click");
const backgroundPayload = fixtureJson<PromptPayload>("prompt_background");

function layerOf(payload: PromptPayload, level: Level): MaskLayer {
  if (level === "word") {
    if (payload.word === null) {
      throw new Error("payload has no word");
    }
    return { level, pixels: decode(payload.word.rle) };
  }
  if (level === "line") {
    return { level, pixels: decode(payload.line.rle) };
  }
  return { level, pixels: decode(payload.paragraph.rle) };
}

describe("prompt overlay pixel diff equals the decoded masks", () => {
  for (const level of ["word", "line", "paragraph"] as Level[]) {
    it(`matches exactly for the ${level} layer`, () => {
      const base = grayBase();
      const layer = layerOf(clickPayload, level);
      const out = renderOverlay(base, SIZE, SIZE, [layer]);
      expect(changedPixels(base, out)).toEqual(maskSet(layer.pixels));
    });
  }

  it("stacked layers change exactly the union of the masks", () => {
    const base = grayBase();
    const layers = (["paragraph", "line", "word"] as Level[]).map((lv) =>
      layerOf(clickPayload, lv),
    );
    const out = renderOverlay(base, SIZE, SIZE, layers);
    const union = new Set<number>();
    for (const layer of layers) {
      for (const idx of maskSet(layer.pixels)) {
        union.add(idx);
      }
    }
    expect(changedPixels(base, out)).toEqual(union);
  });

  it("stacked blend matches an independent per-pixel float chain", () => {
    const base = grayBase();
    const layers = (["word", "paragraph", "line"] as Level[]).map((lv) =>
      layerOf(clickPayload, lv),
    );
    const out = renderOverlay(base, SIZE, SIZE, layers);
    // Recompute a few hundred pixels directly: paint order is the fixed
    // hierarchy order regardless of the order layers were passed in.
    const byLevel = new Map(layers.map((l) => [l.level, l.pixels]));
    const painted = LEVEL_ORDER.filter((lv) => byLevel.has(lv));
    for (let i = 0; i < SIZE * SIZE; i += 97) {
      const expected = [120, 120, 120];
      for (const lv of painted) {
        if (byLevel.get(lv)![i]) {
          const color = LEVEL_COLORS[lv];
          for (let c = 0; c < 3; c++) {
            expected[c] = (1 - OVERLAY_ALPHA) * expected[c]! + OVERLAY_ALPHA * color[c]!;
          }
        }
      }
      for (let c = 0; c < 3; c++) {
        expect(out[i * 4 + c]).toBe(Math.floor(expected[c]!));
      }
      expect(out[i * 4 + 3]).toBe(255);
    }
  });

  it("leaves the base buffer untouched and the alpha channel intact", () => {
    const base = grayBase();
    const snapshot = new Uint8ClampedArray(base);
    const out = renderOverlay(base, SIZE, SIZE, [layerOf(clickPayload, "line")]);
    expect(Array.from(base)).toEqual(Array.from(snapshot));
    for (let i = 0; i < SIZE * SIZE; i++) {
      expect(out[i * 4 + 3]).toBe(255);
    }
  });

  it("rejects mismatched buffer sizes", () => {
    expect(() => renderOverlay(new Uint8ClampedArray(16), SIZE, SIZE, [])).toThrow(
      /does not match/,
    );
    const layer: MaskLayer = { level: "line", pixels: new Uint8Array(4) };
    expect(() => renderOverlay(grayBase(), SIZE, SIZE, [layer])).toThrow(
      /expected 65536/,
    );
  });
});

describe("overlay state", () => {
  it("keeps exactly one active hierarchy level", () => {
    const state = new OverlayState(SIZE);
    state.applyPrompt(clickPayload);
    state.activeLevel = "paragraph";
    const active = state.activeLayers();
    expect(active).toHaveLength(1);
    expect(active[0]!.level).toBe("paragraph");
  });

  it("repeated clicks never stack duplicate layers", () => {
    const state = new OverlayState(SIZE);
    state.applyPrompt(clickPayload);
    const once = renderOverlay(grayBase(), SIZE, SIZE, state.allLayers());
    state.applyPrompt(clickPayload);
    expect(state.allLayers()).toHaveLength(3);
    expect(state.clickHistory).toHaveLength(2);
    const twice = renderOverlay(grayBase(), SIZE, SIZE, state.allLayers());
    expect(Array.from(twice)).toEqual(Array.from(once));
  });

  it("reports clicks that found no word", () => {
    const state = new OverlayState(SIZE);
    expect(state.applyPrompt(backgroundPayload)).toBe(false);
    expect(state.applyPrompt(clickPayload)).toBe(true);
  });

  it("background clicks still show line and paragraph layers", () => {
    const state = new OverlayState(SIZE);
    state.applyPrompt(backgroundPayload);
    const levels = state.allLayers().map((l) => l.level);
    expect(levels).toEqual(["paragraph", "line"]);
  });

  it("click history replays to an identical overlay", () => {
    const state = new OverlayState(SIZE);
    state.applyPrompt(clickPayload);
    state.applyPrompt(backgroundPayload);
    state.activeLevel = "line";
    const replayed = state.replay();
    expect(replayed.clickHistory.map((c) => [c.x, c.y])).toEqual(
      state.clickHistory.map((c) => [c.x, c.y]),
    );
    const live = renderOverlay(grayBase(), SIZE, SIZE, state.allLayers());
    const again = renderOverlay(grayBase(), SIZE, SIZE, replayed.allLayers());
    expect(Array.from(again)).toEqual(Array.from(live));
  });
});
