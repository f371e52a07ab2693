/** Canvas-to-image coordinate mapping and zoom-grid line placement. */

export interface PixelPos {
  row: number;
  col: number;
}

/**
 * Map a pointer position inside the canvas element to an image pixel.
 * The canvas may be CSS-scaled, so positions are rescaled by the ratio of
 * the bitmap size to the element size and clamped to the image bounds.
 */
export function canvasToImage(
  offsetX: number,
  offsetY: number,
  elementWidth: number,
  elementHeight: number,
  imageWidth: number,
  imageHeight: number,
): PixelPos {
  const col = Math.floor((offsetX / elementWidth) * imageWidth);
  const row = Math.floor((offsetY / elementHeight) * imageHeight);
  return {
    row: Math.min(Math.max(row, 0), imageHeight - 1),
    col: Math.min(Math.max(col, 0), imageWidth - 1),
  };
}

/**
 * Round the zoom grid's fractional source-pixel sample positions to
 * deduplicated integer lines, keeping every `step`-th one so dense grids
 * stay readable.
 */
export function gridLinePixels(coords: number[], sizePx: number, step = 8): number[] {
  const out: number[] = [];
  let last = -1;
  for (let i = 0; i < coords.length; i += step) {
    const p = Math.round(coords[i]);
    if (p >= 0 && p < sizePx && p !== last) {
      out.push(p);
      last = p;
    }
  }
  return out;
}
