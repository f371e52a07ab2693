/**
 * Pure pixel-buffer compositing for the mask overlay.
 *
 * Everything here works on flat RGBA Uint8ClampedArray buffers so it can be
 * tested without a DOM; main.ts wraps the result in ImageData for the canvas.
 */

export const FILL_RGB: readonly [number, number, number] = [46, 160, 240];
export const FILL_ALPHA = 0.5;
export const CONTOUR_RGB: readonly [number, number, number] = [255, 255, 255];
export const POSITIVE_RGB: readonly [number, number, number] = [46, 204, 113];
export const NEGATIVE_RGB: readonly [number, number, number] = [231, 76, 60];
export const MARKER_RADIUS = 3;
export const GRID_RGB: readonly [number, number, number] = [255, 215, 0];

/** 1 where the pixel is foreground and at least one 4-neighbor is not. */
export function maskContour(mask: Uint8Array, h: number, w: number): Uint8Array {
  const edge = new Uint8Array(h * w);
  for (let r = 0; r < h; r++) {
    for (let c = 0; c < w; c++) {
      const i = r * w + c;
      if (!mask[i]) continue;
      const bare =
        r === 0 ||
        r === h - 1 ||
        c === 0 ||
        c === w - 1 ||
        !mask[i - w] ||
        !mask[i + w] ||
        !mask[i - 1] ||
        !mask[i + 1];
      if (bare) edge[i] = 1;
    }
  }
  return edge;
}

/**
 * Blend the mask onto a copy of the base image: half-transparent fill over
 * foreground pixels, solid one-pixel contour on the mask boundary.
 */
export function composeOverlay(
  base: Uint8ClampedArray,
  mask: Uint8Array,
  h: number,
  w: number,
): Uint8ClampedArray {
  if (base.length !== h * w * 4) {
    throw new Error(`base buffer length ${base.length} does not match ${h}x${w} RGBA`);
  }
  if (mask.length !== h * w) {
    throw new Error(`mask length ${mask.length} does not match ${h}x${w}`);
  }
  const out = new Uint8ClampedArray(base);
  const edge = maskContour(mask, h, w);
  for (let i = 0; i < mask.length; i++) {
    const j = i * 4;
    if (edge[i]) {
      out[j] = CONTOUR_RGB[0];
      out[j + 1] = CONTOUR_RGB[1];
      out[j + 2] = CONTOUR_RGB[2];
      out[j + 3] = 255;
    } else if (mask[i]) {
      out[j] = Math.round((1 - FILL_ALPHA) * out[j] + FILL_ALPHA * FILL_RGB[0]);
      out[j + 1] = Math.round((1 - FILL_ALPHA) * out[j + 1] + FILL_ALPHA * FILL_RGB[1]);
      out[j + 2] = Math.round((1 - FILL_ALPHA) * out[j + 2] + FILL_ALPHA * FILL_RGB[2]);
      out[j + 3] = 255;
    }
  }
  return out;
}

/** Stamp a filled click marker disc, clipped at the borders. */
export function drawMarker(
  rgba: Uint8ClampedArray,
  h: number,
  w: number,
  row: number,
  col: number,
  positive: boolean,
  radius: number = MARKER_RADIUS,
): void {
  const [mr, mg, mb] = positive ? POSITIVE_RGB : NEGATIVE_RGB;
  const r2 = radius * radius;
  for (let dr = -radius; dr <= radius; dr++) {
    const r = row + dr;
    if (r < 0 || r >= h) continue;
    for (let dc = -radius; dc <= radius; dc++) {
      const c = col + dc;
      if (c < 0 || c >= w) continue;
      if (dr * dr + dc * dc > r2) continue;
      const j = (r * w + c) * 4;
      rgba[j] = mr;
      rgba[j + 1] = mg;
      rgba[j + 2] = mb;
      rgba[j + 3] = 255;
    }
  }
}

/** Paint one-pixel zoom grid lines at the given column and row positions. */
export function drawGrid(
  rgba: Uint8ClampedArray,
  h: number,
  w: number,
  cols: number[],
  rows: number[],
): void {
  const [gr, gg, gb] = GRID_RGB;
  const stamp = (j: number) => {
    rgba[j] = Math.round(0.4 * rgba[j] + 0.6 * gr);
    rgba[j + 1] = Math.round(0.4 * rgba[j + 1] + 0.6 * gg);
    rgba[j + 2] = Math.round(0.4 * rgba[j + 2] + 0.6 * gb);
    rgba[j + 3] = 255;
  };
  for (const c of cols) {
    if (c < 0 || c >= w) continue;
    for (let r = 0; r < h; r++) stamp((r * w + c) * 4);
  }
  for (const r of rows) {
    if (r < 0 || r >= h) continue;
    for (let c = 0; c < w; c++) stamp((r * w + c) * 4);
  }
}
