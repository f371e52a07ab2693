/**
 * Session state machine: click bookkeeping, single-in-flight request
 * guarding, undo, and overlay assembly. No DOM access, so the whole thing
 * runs under vitest with a replayed transport.
 */

import { ApiClient, CreateSessionOptions, RoundView, SessionView, ZoomGrid } from './api.js';
import { composeOverlay, drawGrid, drawMarker } from './overlay.js';
import { gridLinePixels } from './coords.js';
import { decodeMask, MaskPayload } from './rle.js';

export interface PlacedClick {
  row: number;
  col: number;
  positive: boolean;
}

export class SessionController {
  private session: SessionView | null = null;
  private maskHistory: MaskPayload[] = [];
  private clickHistory: PlacedClick[] = [];
  private lastRound: RoundView | null = null;
  private inFlight = false;

  constructor(private readonly api: ApiClient) {}

  get t(): number {
    return this.maskHistory.length - 1;
  }

  get busy(): boolean {
    return this.inFlight;
  }

  get id(): string {
    return this.mustSession().id;
  }

  get budget(): number {
    return this.mustSession().budget;
  }

  get height(): number {
    return this.mustSession().height;
  }

  get width(): number {
    return this.mustSession().width;
  }

  get iou(): number | null {
    return this.lastRound ? this.lastRound.iou : this.mustSession().iou;
  }

  get lambda(): number | null {
    return this.lastRound?.lambda ?? null;
  }

  get grid(): ZoomGrid | null {
    return this.lastRound?.grid ?? null;
  }

  get clicks(): readonly PlacedClick[] {
    return this.clickHistory;
  }

  private mustSession(): SessionView {
    if (!this.session) throw new Error('no open session');
    return this.session;
  }

  private async guarded<T>(work: () => Promise<T>): Promise<T> {
    if (this.inFlight) throw new Error('request already in flight');
    this.inFlight = true;
    try {
      return await work();
    } finally {
      this.inFlight = false;
    }
  }

  async open(opts: CreateSessionOptions): Promise<SessionView> {
    return this.guarded(async () => {
      const view = await this.api.createSession(opts);
      this.session = view;
      this.maskHistory = [view.mask];
      this.clickHistory = [];
      this.lastRound = null;
      return view;
    });
  }

  async addClick(row: number, col: number, positive: boolean): Promise<RoundView> {
    const s = this.mustSession();
    if (this.t >= s.budget) throw new Error('click budget exhausted');
    return this.guarded(async () => {
      const round = await this.api.sendClick(s.id, row, col, positive);
      this.maskHistory.push(round.mask);
      this.clickHistory.push({ row, col, positive });
      this.lastRound = round;
      return round;
    });
  }

  async undo(): Promise<RoundView> {
    const s = this.mustSession();
    if (this.t === 0) throw new Error('nothing to undo');
    return this.guarded(async () => {
      const round = await this.api.undo(s.id);
      this.maskHistory.pop();
      this.clickHistory.pop();
      this.lastRound = round.t > 0 ? round : null;
      return round;
    });
  }

  /** Server-provided mask for the current round, decoded to 0/1 pixels. */
  currentMask(): Uint8Array {
    const payload = this.maskHistory[this.maskHistory.length - 1];
    return decodeMask(payload);
  }

  /** Wire payload of the mask at a given round (for exactness checks). */
  maskPayloadAt(t: number): MaskPayload {
    if (t < 0 || t >= this.maskHistory.length) {
      throw new Error(`no mask recorded for round ${t}`);
    }
    return this.maskHistory[t];
  }

  /**
   * Compose the displayed frame: image, half-transparent mask fill with
   * contour, click markers, and (optionally) the zoom grid.
   */
  renderFrame(imageRGBA: Uint8ClampedArray, showGrid: boolean): Uint8ClampedArray {
    const s = this.mustSession();
    const frame = composeOverlay(imageRGBA, this.currentMask(), s.height, s.width);
    for (const c of this.clickHistory) {
      drawMarker(frame, s.height, s.width, c.row, c.col, c.positive);
    }
    const grid = this.grid;
    if (showGrid && grid) {
      drawGrid(
        frame,
        s.height,
        s.width,
        gridLinePixels(grid.x, s.width),
        gridLinePixels(grid.y, s.height),
      );
    }
    return frame;
  }
}
