/**
 * Run-length mask codec matching the server's wire format.
 *
 * Masks travel as {h, w, rle} where rle is base64 over little-endian
 * uint32 run lengths, row-major, alternating zero-run/one-run counts and
 * always starting with the zero run (which may be 0).
 */

export interface MaskPayload {
  h: number;
  w: number;
  rle: string;
}

function base64ToBytes(b64: string): Uint8Array {
  const bin = atob(b64);
  const out = new Uint8Array(bin.length);
  for (let i = 0; i < bin.length; i++) {
    out[i] = bin.charCodeAt(i);
  }
  return out;
}

function bytesToBase64(bytes: Uint8Array): string {
  let bin = '';
  const chunk = 0x8000;
  for (let i = 0; i < bytes.length; i += chunk) {
    bin += String.fromCharCode(...bytes.subarray(i, i + chunk));
  }
  return btoa(bin);
}

/** Decode a mask payload to a flat row-major Uint8Array of 0/1 values. */
export function decodeMask(payload: MaskPayload): Uint8Array {
  const { h, w, rle } = payload;
  if (!Number.isInteger(h) || !Number.isInteger(w) || h < 1 || w < 1) {
    throw new Error(`bad mask dimensions ${h}x${w}`);
  }
  const bytes = base64ToBytes(rle);
  if (bytes.length % 4 !== 0) {
    throw new Error(`rle payload length ${bytes.length} is not a multiple of 4`);
  }
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.length);
  const total = h * w;
  const mask = new Uint8Array(total);
  let pos = 0;
  let value = 0;
  for (let i = 0; i < bytes.length / 4; i++) {
    const n = view.getUint32(i * 4, true);
    if (pos + n > total) {
      throw new Error(`run lengths exceed ${h}x${w}`);
    }
    if (value === 1) {
      mask.fill(1, pos, pos + n);
    }
    pos += n;
    value ^= 1;
  }
  if (pos !== total) {
    throw new Error(`run lengths cover ${pos} of ${total} pixels`);
  }
  return mask;
}

/** Exact inverse of decodeMask. */
export function encodeMask(mask: Uint8Array, h: number, w: number): MaskPayload {
  if (mask.length !== h * w) {
    throw new Error(`mask length ${mask.length} does not match ${h}x${w}`);
  }
  const runs: number[] = [];
  let value = 0;
  let run = 0;
  for (let i = 0; i < mask.length; i++) {
    const v = mask[i] ? 1 : 0;
    if (v === value) {
      run++;
    } else {
      runs.push(run);
      value = v;
      run = 1;
    }
  }
  runs.push(run);
  const buf = new Uint8Array(runs.length * 4);
  const view = new DataView(buf.buffer);
  runs.forEach((n, i) => view.setUint32(i * 4, n, true));
  return { h, w, rle: bytesToBase64(buf) };
}
