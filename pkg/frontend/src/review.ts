/**
 * Review workflow for automatically generated labels: run full-hierarchy
 * mask generation server-side, accept/reject/correct instances, export.
 *
 * All edits go through the service's versioned PATCH endpoint. When the
 * server reports a version conflict (another writer got there first) the
 * session enters a conflict state: pending edits are kept, nothing is
 * retried silently, and the caller must resync before flushing again.
 */

import {
  ApiError,
  type AmgDump,
  type AmgRequest,
  type EditLevel,
  type EditOp,
  type ExportResult,
  type TextHierClient,
} from "./api.js";

export type ReviewStatus = "draft" | "accepted" | "rejected";

export class ReviewSession {
  dump: AmgDump | null = null;
  version = 0;
  conflict = false;
  lineStatus: ReviewStatus[] = [];
  /** Flat word index, in the dump's line-major order. */
  wordStatus: ReviewStatus[] = [];
  readonly polygonEdits = new Map<number, number[][]>();
  private pending: EditOp[] = [];

  constructor(
    private readonly client: TextHierClient,
    readonly sessionId: string,
  ) {}

  get pendingEdits(): readonly EditOp[] {
    return this.pending;
  }

  /** Generate fresh drafts; any previous review state is discarded. */
  async runAmg(cfg: AmgRequest = {}): Promise<AmgDump> {
    const dump = await this.client.runAmg(this.sessionId, cfg);
    this.dump = dump;
    this.version = dump.version;
    this.lineStatus = dump.lines.map(() => "draft");
    this.wordStatus = dump.words.flat().map(() => "draft");
    this.polygonEdits.clear();
    this.pending = [];
    this.conflict = false;
    return dump;
  }

  /** Flat index of word k within line lineIdx. */
  wordIndex(lineIdx: number, k: number): number {
    if (this.dump === null) {
      throw new Error("run AMG before reviewing");
    }
    let flat = 0;
    for (let i = 0; i < lineIdx; i++) {
      flat += this.dump.words[i]?.length ?? 0;
    }
    return flat + k;
  }

  accept(level: EditLevel, index: number): void {
    this.setStatus(level, index, "accepted");
    this.pending.push({ action: "accept", level, index });
  }

  reject(level: EditLevel, index: number): void {
    this.setStatus(level, index, "rejected");
    this.pending.push({ action: "reject", level, index });
  }

  setPolygon(wordIndex: number, polygon: number[][]): void {
    this.checkIndex("word", wordIndex);
    this.polygonEdits.set(wordIndex, polygon);
    this.pending.push({
      action: "set_polygon",
      level: "word",
      index: wordIndex,
      polygon,
    });
  }

  /** Mark every line and word accepted (lines first, ascending index). */
  acceptAll(): void {
    for (let i = 0; i < this.lineStatus.length; i++) {
      this.accept("line", i);
    }
    for (let i = 0; i < this.wordStatus.length; i++) {
      this.accept("word", i);
    }
  }

  /**
   * Send pending edits. Returns true when the server accepted them. On a
   * version conflict the session enters the conflict state and keeps the
   * pending edits; further flushes are no-ops until resync() runs.
   */
  async flush(): Promise<boolean> {
    if (this.conflict) {
      return false;
    }
    if (this.pending.length === 0) {
      return true;
    }
    try {
      const resp = await this.client.patchLabels(
        this.sessionId,
        this.version,
        this.pending,
      );
      this.version = resp.version;
      this.pending = [];
      return true;
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        this.conflict = true;
        return false;
      }
      throw err;
    }
  }

  /**
   * Adopt the server's current version (the server state wins); pending
   * edits stay queued so the reviewer can flush them against the fresh
   * version or discard them explicitly.
   */
  async resync(): Promise<void> {
    const result = await this.client.exportLabels(this.sessionId);
    this.version = result.data.version;
    this.conflict = false;
  }

  discardPending(): void {
    this.pending = [];
  }

  /** Verbatim export bytes from the server. */
  async exportLabels(): Promise<ExportResult> {
    return this.client.exportLabels(this.sessionId);
  }

  private setStatus(level: EditLevel, index: number, status: ReviewStatus): void {
    this.checkIndex(level, index);
    if (level === "line") {
      this.lineStatus[index] = status;
    } else {
      this.wordStatus[index] = status;
    }
  }

  private checkIndex(level: EditLevel, index: number): void {
    const limit =
      level === "line" ? this.lineStatus.length : this.wordStatus.length;
    if (!Number.isInteger(index) || index < 0 || index >= limit) {
      throw new RangeError(`${level} index ${index} out of range (${limit})`);
    }
  }
}
