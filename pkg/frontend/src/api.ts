/**
 * Typed client for the interseg HTTP session service.
 *
 * The fetch implementation is injectable so tests can replay recorded
 * exchanges without a network.
 */

import type { MaskPayload } from './rle.js';

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export interface ClickRecord {
  row: number;
  col: number;
  polarity: 'positive' | 'negative';
  round: number;
}

export interface RoundSummary {
  t: number;
  lambda: number | null;
  iou: number | null;
  seconds: number | null;
}

export interface SessionView {
  id: string;
  t: number;
  budget: number;
  height: number;
  width: number;
  mask: MaskPayload;
  clicks: ClickRecord[];
  iou: number | null;
  rounds: RoundSummary[];
}

export interface ZoomGrid {
  x: number[];
  y: number[];
}

export interface RoundView {
  t: number;
  mask: MaskPayload;
  lambda: number | null;
  iou: number | null;
  seconds: number | null;
  grid: ZoomGrid | null;
}

export interface CreateSessionOptions {
  imageB64: string;
  gtB64?: string;
  segmenter?: string;
  budget?: number;
  workingSize?: number;
  seed?: number;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

async function parseOrThrow<T>(res: Response): Promise<T> {
  if (res.ok) {
    return (await res.json()) as T;
  }
  let detail = res.statusText;
  try {
    const body = await res.json();
    if (typeof body?.detail === 'string') detail = body.detail;
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(res.status, detail);
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string = '',
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.fetchImpl(this.baseUrl + path, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(body),
    }).then((res) => parseOrThrow<T>(res));
  }

  createSession(opts: CreateSessionOptions): Promise<SessionView> {
    const body: Record<string, unknown> = {
      image_b64: opts.imageB64,
      segmenter: opts.segmenter ?? 'geodesic',
      budget: opts.budget ?? 20,
      working_size: opts.workingSize ?? 256,
      seed: opts.seed ?? 0,
    };
    if (opts.gtB64 !== undefined) body.gt_b64 = opts.gtB64;
    return this.post<SessionView>('/sessions', body);
  }

  getSession(sid: string): Promise<SessionView> {
    return this.fetchImpl(`${this.baseUrl}/sessions/${sid}`).then((res) =>
      parseOrThrow<SessionView>(res),
    );
  }

  sendClick(sid: string, row: number, col: number, positive: boolean): Promise<RoundView> {
    return this.post<RoundView>(`/sessions/${sid}/clicks`, { row, col, positive });
  }

  undo(sid: string): Promise<RoundView> {
    return this.post<RoundView>(`/sessions/${sid}/undo`, {});
  }

  deleteSession(sid: string): Promise<{ deleted: string }> {
    return this.fetchImpl(`${this.baseUrl}/sessions/${sid}`, { method: 'DELETE' }).then((res) =>
      parseOrThrow<{ deleted: string }>(res),
    );
  }

  lambdaSchedule(budget: number): Promise<{ budget: number; lambda: number[] }> {
    return this.fetchImpl(`${this.baseUrl}/lambda-schedule?budget=${budget}`).then((res) =>
      parseOrThrow<{ budget: number; lambda: number[] }>(res),
    );
  }
}
