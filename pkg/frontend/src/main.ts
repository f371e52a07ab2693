/** DOM wiring: file pickers, the canvas, and the session controls. */

import { ApiClient } from './api.js';
import { canvasToImage } from './coords.js';
import { SessionController } from './state.js';

const api = new ApiClient('');
const controller = new SessionController(api);

const imageInput = document.getElementById('image-file') as HTMLInputElement;
const gtInput = document.getElementById('gt-file') as HTMLInputElement;
const segmenterSelect = document.getElementById('segmenter') as HTMLSelectElement;
const budgetInput = document.getElementById('budget') as HTMLInputElement;
const startButton = document.getElementById('start') as HTMLButtonElement;
const undoButton = document.getElementById('undo') as HTMLButtonElement;
const gridToggle = document.getElementById('grid-toggle') as HTMLInputElement;
const statusLine = document.getElementById('status') as HTMLElement;
const canvas = document.getElementById('view') as HTMLCanvasElement;
const ctx = canvas.getContext('2d')!;

let baseRGBA: Uint8ClampedArray | null = null;

function setStatus(text: string): void {
  statusLine.textContent = text;
}

function describeRound(): string {
  const parts = [`round ${controller.t}/${controller.budget}`];
  if (controller.lambda !== null) parts.push(`lambda ${controller.lambda.toFixed(2)}`);
  if (controller.iou !== null) parts.push(`IoU ${controller.iou.toFixed(3)}`);
  if (controller.grid) parts.push('zoomed');
  return parts.join(' | ');
}

function redraw(): void {
  if (!baseRGBA) return;
  const frame = controller.renderFrame(baseRGBA, gridToggle.checked);
  const data = new Uint8ClampedArray(frame);
  ctx.putImageData(new ImageData(data, controller.width, controller.height), 0, 0);
  undoButton.disabled = controller.t === 0;
  setStatus(describeRound());
}

async function fileToBase64(file: File): Promise<string> {
  const buf = new Uint8Array(await file.arrayBuffer());
  let bin = '';
  for (let i = 0; i < buf.length; i += 0x8000) {
    bin += String.fromCharCode(...buf.subarray(i, i + 0x8000));
  }
  return btoa(bin);
}

async function filePixels(file: File): Promise<{ rgba: Uint8ClampedArray; w: number; h: number }> {
  const bitmap = await createImageBitmap(file);
  const off = document.createElement('canvas');
  off.width = bitmap.width;
  off.height = bitmap.height;
  const octx = off.getContext('2d')!;
  octx.drawImage(bitmap, 0, 0);
  const data = octx.getImageData(0, 0, bitmap.width, bitmap.height);
  return { rgba: data.data, w: bitmap.width, h: bitmap.height };
}

startButton.addEventListener('click', async () => {
  const file = imageInput.files?.[0];
  if (!file) {
    setStatus('choose an image first');
    return;
  }
  try {
    const pixels = await filePixels(file);
    const opts = {
      imageB64: await fileToBase64(file),
      segmenter: segmenterSelect.value,
      budget: Number(budgetInput.value) || 20,
      gtB64: undefined as string | undefined,
    };
    const gtFile = gtInput.files?.[0];
    if (gtFile) opts.gtB64 = await fileToBase64(gtFile);
    await controller.open(opts);
    canvas.width = controller.width;
    canvas.height = controller.height;
    baseRGBA = pixels.rgba;
    redraw();
  } catch (err) {
    setStatus(String(err));
  }
});

async function clickAt(ev: MouseEvent, positive: boolean): Promise<void> {
  if (!baseRGBA || controller.busy) return;
  const rect = canvas.getBoundingClientRect();
  const pos = canvasToImage(
    ev.clientX - rect.left,
    ev.clientY - rect.top,
    rect.width,
    rect.height,
    controller.width,
    controller.height,
  );
  try {
    await controller.addClick(pos.row, pos.col, positive);
    redraw();
  } catch (err) {
    setStatus(String(err));
  }
}

canvas.addEventListener('click', (ev) => void clickAt(ev, true));
canvas.addEventListener('contextmenu', (ev) => {
  ev.preventDefault();
  void clickAt(ev, false);
});

undoButton.addEventListener('click', async () => {
  try {
    await controller.undo();
    redraw();
  } catch (err) {
    setStatus(String(err));
  }
});

gridToggle.addEventListener('change', redraw);

setStatus('pick an image and start a session');
