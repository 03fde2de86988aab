/**
 * Browser wiring: upload an image, click to segment, review generated
 * labels, export. All model access goes through the HTTP service.
 */

import { ApiError, TextHierClient, type SessionInfo } from "./api.js";
import {
  LEVEL_COLORS,
  OverlayState,
  renderOverlay,
  type Level,
  type MaskLayer,
} from "./overlay.js";
import { decode } from "./rle.js";
import { ReviewSession } from "./review.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

const baseUrlInput = el<HTMLInputElement>("base-url");
const fileInput = el<HTMLInputElement>("image-file");
const canvas = el<HTMLCanvasElement>("page-canvas");
const toast = el<HTMLDivElement>("toast");
const conflictBanner = el<HTMLDivElement>("conflict-banner");
const resyncButton = el<HTMLButtonElement>("resync");
const amgButton = el<HTMLButtonElement>("run-amg");
const exportButton = el<HTMLButtonElement>("export");
const acceptAllButton = el<HTMLButtonElement>("accept-all");
const instanceList = el<HTMLUListElement>("instances");
const levelPicker = el<HTMLDivElement>("level-picker");
const showAllToggle = el<HTMLInputElement>("show-all");
const statusLine = el<HTMLDivElement>("status");

let client = new TextHierClient(baseUrlInput.value);
let session: SessionInfo | null = null;
let overlay: OverlayState | null = null;
let review: ReviewSession | null = null;
let baseImage: ImageData | null = null;
let reviewLayers: MaskLayer[] = [];

baseUrlInput.addEventListener("change", () => {
  client = new TextHierClient(baseUrlInput.value);
});

function say(message: string): void {
  statusLine.textContent = message;
}

function showToast(message: string): void {
  toast.textContent = message;
  toast.classList.add("visible");
  window.setTimeout(() => toast.classList.remove("visible"), 1800);
}

function redraw(): void {
  if (baseImage === null) {
    return;
  }
  const ctx = canvas.getContext("2d");
  if (ctx === null) {
    return;
  }
  const layers: MaskLayer[] = [];
  if (overlay !== null) {
    layers.push(
      ...(showAllToggle.checked ? overlay.allLayers() : overlay.activeLayers()),
    );
  }
  layers.push(...reviewLayers);
  const blended = renderOverlay(
    baseImage.data,
    baseImage.width,
    baseImage.height,
    layers,
  ) as Uint8ClampedArray<ArrayBuffer>;
  ctx.putImageData(new ImageData(blended, baseImage.width, baseImage.height), 0, 0);
}

fileInput.addEventListener("change", async () => {
  const file = fileInput.files?.[0];
  if (file === undefined) {
    return;
  }
  try {
    say("uploading…");
    session = await client.createSession(await file.arrayBuffer());
    overlay = new OverlayState(session.input_size);
    review = new ReviewSession(client, session.session_id);
    reviewLayers = [];
    instanceList.replaceChildren();
    conflictBanner.classList.remove("visible");

    const bitmap = await createImageBitmap(file);
    canvas.width = session.input_size;
    canvas.height = session.input_size;
    const ctx = canvas.getContext("2d");
    if (ctx === null) {
      return;
    }
    ctx.drawImage(bitmap, 0, 0, session.input_size, session.input_size);
    baseImage = ctx.getImageData(0, 0, session.input_size, session.input_size);
    say(`session ${session.session_id.slice(0, 8)}… ready — click on text`);
  } catch (err) {
    say(err instanceof Error ? err.message : String(err));
  }
});

canvas.addEventListener("click", async (event) => {
  if (session === null || overlay === null) {
    return;
  }
  const rect = canvas.getBoundingClientRect();
  const x = ((event.clientX - rect.left) / rect.width) * session.input_size;
  const y = ((event.clientY - rect.top) / rect.height) * session.input_size;
  try {
    const payload = await client.prompt(session.session_id, x, y);
    const hasText = overlay.applyPrompt(payload);
    if (!hasText) {
      showToast("no text here");
    }
    redraw();
  } catch (err) {
    if (err instanceof DOMException && err.name === "AbortError") {
      return; // superseded by a newer click
    }
    say(err instanceof Error ? err.message : String(err));
  }
});

for (const level of ["pixel", "word", "line", "paragraph"] as Level[]) {
  const button = document.createElement("button");
  button.textContent = level;
  button.style.borderColor = `rgb(${LEVEL_COLORS[level].join(",")})`;
  button.addEventListener("click", () => {
    if (overlay !== null) {
      overlay.activeLevel = level;
      redraw();
    }
  });
  levelPicker.append(button);
}

showAllToggle.addEventListener("change", redraw);

amgButton.addEventListener("click", async () => {
  if (review === null || session === null) {
    return;
  }
  try {
    say("generating masks…");
    const dump = await review.runAmg({});
    reviewLayers = [
      { level: "pixel", pixels: decode(dump.pixel_text) },
    ];
    renderInstances();
    redraw();
    say(`generated ${dump.lines.length} lines in ${new Set(dump.layout).size} paragraphs`);
  } catch (err) {
    say(err instanceof Error ? err.message : String(err));
  }
});

function renderInstances(): void {
  if (review === null || review.dump === null) {
    return;
  }
  const current = review;
  const dump = current.dump!;
  instanceList.replaceChildren(
    ...dump.lines.map((line, i) => {
      const item = document.createElement("li");
      const label = document.createElement("span");
      label.textContent = `line ${i} · cluster ${dump.layout[i]} · score ${line.score.toFixed(2)} · ${current.lineStatus[i]}`;
      const accept = document.createElement("button");
      accept.textContent = "accept";
      accept.addEventListener("click", () => void decide(i, "accept"));
      const reject = document.createElement("button");
      reject.textContent = "reject";
      reject.addEventListener("click", () => void decide(i, "reject"));
      item.append(label, accept, reject);
      return item;
    }),
  );
}

async function decide(lineIdx: number, action: "accept" | "reject"): Promise<void> {
  if (review === null) {
    return;
  }
  if (action === "accept") {
    review.accept("line", lineIdx);
  } else {
    review.reject("line", lineIdx);
  }
  await pushEdits();
  renderInstances();
}

async function pushEdits(): Promise<void> {
  if (review === null) {
    return;
  }
  const ok = await review.flush();
  if (!ok && review.conflict) {
    conflictBanner.classList.add("visible");
  }
}

acceptAllButton.addEventListener("click", async () => {
  if (review === null) {
    return;
  }
  review.acceptAll();
  await pushEdits();
  renderInstances();
});

resyncButton.addEventListener("click", async () => {
  if (review === null) {
    return;
  }
  await review.resync();
  conflictBanner.classList.remove("visible");
  await pushEdits();
  renderInstances();
});

exportButton.addEventListener("click", async () => {
  if (review === null || session === null) {
    return;
  }
  try {
    const result = await review.exportLabels();
    const blob = new Blob([result.bytes as Uint8Array<ArrayBuffer>], {
      type: "application/json",
    });
    const link = document.createElement("a");
    link.href = URL.createObjectURL(blob);
    link.download = `${session.session_id}.labels.json`;
    link.click();
    URL.revokeObjectURL(link.href);
  } catch (err) {
    say(err instanceof Error ? err.message : String(err));
  }
});
