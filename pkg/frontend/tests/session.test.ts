import { describe, expect, it } from 'vitest';
import { readFileSync } from 'node:fs';
import { fileURLToPath } from 'node:url';

import { ApiClient } from '../src/api.js';
import { composeOverlay, drawMarker } from '../src/overlay.js';
import { SessionController } from '../src/state.js';

interface Exchange {
  method: string;
  path: string;
  request: unknown;
  status: number;
  response: Record<string, unknown>;
  pixels_b64: string;
}

interface Trace {
  height: number;
  width: number;
  exchanges: Exchange[];
}

function loadTrace(name: string): Trace {
  return JSON.parse(
    readFileSync(fileURLToPath(new URL(`./fixtures/${name}`, import.meta.url)), 'utf8'),
  );
}

function pixelsOf(b64: string): Uint8Array {
  const bin = atob(b64);
  const out = new Uint8Array(bin.length);
  for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
  return out;
}

function grayBase(h: number, w: number): Uint8ClampedArray {
  const base = new Uint8ClampedArray(h * w * 4);
  for (let i = 0; i < h * w; i++) base.set([90, 90, 90, 255], i * 4);
  return base;
}

/**
 * Replays a recorded server conversation in order, failing the test if the
 * client ever issues a request that differs from what the real server saw.
 */
function replayFetch(trace: Trace): (url: string, init?: RequestInit) => Promise<Response> {
  let cursor = 0;
  return async (url, init) => {
    expect(cursor, `unexpected extra request ${url}`).toBeLessThan(trace.exchanges.length);
    const want = trace.exchanges[cursor++];
    expect(init?.method ?? 'GET').toBe(want.method);
    expect(url).toBe(want.path);
    expect(JSON.parse((init?.body as string) ?? 'null')).toEqual(want.request);
    return new Response(JSON.stringify(want.response), {
      status: want.status,
      headers: { 'Content-Type': 'application/json' },
    });
  };
}

function openOptions(trace: Trace) {
  const create = trace.exchanges[0].request as Record<string, unknown>;
  return {
    imageB64: create.image_b64 as string,
    gtB64: create.gt_b64 as string,
    segmenter: create.segmenter as string,
    budget: create.budget as number,
    workingSize: create.working_size as number,
    seed: create.seed as number,
  };
}

describe('scripted session round trip', () => {
  const trace = loadTrace('session_trace.json');
  const { height: h, width: w } = trace;

  it('keeps the click counter monotone and the overlay equal to the server mask', async () => {
    const controller = new SessionController(new ApiClient('', replayFetch(trace)));
    await controller.open(openOptions(trace));
    expect(controller.t).toBe(0);

    const clickExchanges = trace.exchanges.filter((e) => e.path.endsWith('/clicks'));
    expect(clickExchanges.length).toBe(3);

    const seen: number[] = [controller.t];
    const placed: { row: number; col: number; positive: boolean }[] = [];
    for (const e of clickExchanges) {
      const req = e.request as { row: number; col: number; positive: boolean };
      const round = await controller.addClick(req.row, req.col, req.positive);
      placed.push(req);
      seen.push(controller.t);
      expect(round.t).toBe(controller.t);

      // the decoded mask must be byte-identical to the server's pixel array
      const serverPixels = pixelsOf(e.pixels_b64);
      expect(Buffer.from(controller.currentMask()).equals(Buffer.from(serverPixels))).toBe(true);

      // and the composited frame must match one built from those raw pixels
      const got = controller.renderFrame(grayBase(h, w), false);
      const want = composeOverlay(grayBase(h, w), serverPixels, h, w);
      for (const p of placed) drawMarker(want, h, w, p.row, p.col, p.positive);
      expect(Buffer.from(got.buffer).equals(Buffer.from(want.buffer))).toBe(true);
    }
    for (let i = 1; i < seen.length; i++) {
      expect(seen[i]).toBe(seen[i - 1] + 1);
    }
  });

  it('restores the previous mask bit-exactly on undo', async () => {
    const controller = new SessionController(new ApiClient('', replayFetch(trace)));
    await controller.open(openOptions(trace));
    const clickExchanges = trace.exchanges.filter((e) => e.path.endsWith('/clicks'));
    for (const e of clickExchanges) {
      const req = e.request as { row: number; col: number; positive: boolean };
      await controller.addClick(req.row, req.col, req.positive);
    }
    const beforeUndo = controller.maskPayloadAt(2);
    const round = await controller.undo();

    expect(controller.t).toBe(2);
    expect(round.mask.rle).toBe(beforeUndo.rle);
    const undoExchange = trace.exchanges[trace.exchanges.length - 1];
    expect(undoExchange.path.endsWith('/undo')).toBe(true);
    const serverPixels = pixelsOf(undoExchange.pixels_b64);
    expect(Buffer.from(controller.currentMask()).equals(Buffer.from(serverPixels))).toBe(true);
    expect(controller.clicks.length).toBe(2);
  });

  it('refuses overlapping requests and empty undo', async () => {
    const controller = new SessionController(new ApiClient('', replayFetch(trace)));
    await controller.open(openOptions(trace));
    await expect(controller.undo()).rejects.toThrow(/nothing to undo/);

    const req = trace.exchanges[1].request as { row: number; col: number; positive: boolean };
    const first = controller.addClick(req.row, req.col, req.positive);
    await expect(controller.addClick(req.row, req.col, req.positive)).rejects.toThrow(
      /in flight/,
    );
    await first;
    expect(controller.t).toBe(1);
  });
});

describe('zoomed rounds', () => {
  const trace = loadTrace('zoom_trace.json');
  const { height: h, width: w } = trace;

  it('surfaces the fusion weight and grid, and the grid toggle changes pixels', async () => {
    const controller = new SessionController(new ApiClient('', replayFetch(trace)));
    await controller.open(openOptions(trace));
    const clicks = trace.exchanges.filter((e) => e.path.endsWith('/clicks'));
    let lastLambda: number | null = null;
    for (const e of clicks) {
      const req = e.request as { row: number; col: number; positive: boolean };
      const round = await controller.addClick(req.row, req.col, req.positive);
      lastLambda = round.lambda;
    }
    expect(lastLambda).toBe(0.5);
    expect(controller.grid).not.toBeNull();
    expect(controller.grid?.x.length).toBe(w);
    expect(controller.grid?.y.length).toBe(h);

    const plain = controller.renderFrame(grayBase(h, w), false);
    const gridded = controller.renderFrame(grayBase(h, w), true);
    expect(Buffer.from(plain.buffer).equals(Buffer.from(gridded.buffer))).toBe(false);
  });
});
