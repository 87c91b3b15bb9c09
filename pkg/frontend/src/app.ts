// DOM wiring for the decoration studio: a canvas overlay editor on the left,
// the generated result on the right. All state transitions live in state.ts;
// this file only translates pointer/input events into those transitions.

import { ApiClient, ClassInfo } from './api.js';
import { sizeToRadius, radiusToSize } from './layout.js';
import {
  EditorState,
  deleteObject,
  fromDocument,
  initialState,
  isDegenerateBox,
  placeBox,
  placePoint,
  redo,
  resizeBox,
  resizePoint,
  setMode,
  toDocument,
  undo,
} from './state.js';

const api = new ApiClient();

let state: EditorState | null = null;
let classes: ClassInfo[] = [];
let background: HTMLImageElement | null = null;
let backgroundBase64 = '';
let generateInFlight = false;
let dirtyWhileInFlight = false;

type Drag =
  | { kind: 'create'; startX: number; startY: number; curX: number; curY: number }
  | { kind: 'move'; id: number; lastX: number; lastY: number; moved: boolean; before: string }
  | { kind: 'resize'; id: number; startX: number; startY: number; curX: number; curY: number };

let drag: Drag | null = null;

const $ = <T extends HTMLElement>(id: string) => document.getElementById(id) as T;

function classColor(name: string): string {
  return classes.find((c) => c.name === name)?.color ?? '#888888';
}

function setHint(text: string) {
  $('hint').textContent = text;
}

function redraw() {
  const canvas = $<HTMLCanvasElement>('editor');
  const ctx = canvas.getContext('2d')!;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  if (background) ctx.drawImage(background, 0, 0);
  if (!state) return;

  for (const obj of state.objects) {
    const color = classColor(obj.className);
    ctx.strokeStyle = color;
    ctx.fillStyle = color + '33';
    ctx.lineWidth = obj.id === state.selectedId ? 3 : 1.5;
    if (obj.box) {
      const { x0, y0, x1, y1 } = obj.box;
      ctx.fillRect(x0, y0, x1 - x0, y1 - y0);
      ctx.strokeRect(x0, y0, x1 - x0, y1 - y0);
      ctx.fillStyle = color;
      ctx.fillText(obj.className, x0 + 3, y0 + 12);
    }
    if (obj.point) {
      const r = sizeToRadius(obj.point.size);
      ctx.beginPath();
      ctx.arc(obj.point.cx, obj.point.cy, r, 0, 2 * Math.PI);
      ctx.fill();
      ctx.stroke();
      ctx.fillStyle = color;
      ctx.fillText(obj.className, obj.point.cx + r + 3, obj.point.cy);
    }
  }

  if (drag && drag.kind === 'create' && state.mode === 'box') {
    ctx.strokeStyle = classColor(state.selectedClass);
    ctx.setLineDash([4, 3]);
    ctx.strokeRect(drag.startX, drag.startY, drag.curX - drag.startX, drag.curY - drag.startY);
    ctx.setLineDash([]);
  }

  renderObjectList();
}

function renderObjectList() {
  if (!state) return;
  const list = $('objects');
  list.innerHTML = '';
  for (const obj of state.objects) {
    const row = document.createElement('li');
    const geom = obj.box
      ? `box ${Math.round(obj.box.x0)},${Math.round(obj.box.y0)} – ${Math.round(obj.box.x1)},${Math.round(obj.box.y1)}`
      : `point ${Math.round(obj.point!.cx)},${Math.round(obj.point!.cy)} s=${obj.point!.size.toFixed(1)}`;
    row.textContent = `${obj.className}: ${geom}`;
    row.style.borderLeft = `4px solid ${classColor(obj.className)}`;
    if (obj.id === state.selectedId) row.classList.add('selected');
    row.onclick = () => {
      state = { ...state!, selectedId: obj.id };
      redraw();
    };
    const del = document.createElement('button');
    del.textContent = '×';
    del.onclick = (e) => {
      e.stopPropagation();
      update(deleteObject(state!, obj.id));
    };
    row.appendChild(del);
    list.appendChild(row);
  }
}

function update(next: EditorState) {
  if (next === state) return;
  state = next;
  if (generateInFlight) dirtyWhileInFlight = true;
  redraw();
}

function hitTest(x: number, y: number): number | null {
  if (!state) return null;
  for (let i = state.objects.length - 1; i >= 0; i--) {
    const obj = state.objects[i];
    if (obj.box && x >= obj.box.x0 && x <= obj.box.x1 && y >= obj.box.y0 && y <= obj.box.y1) {
      return obj.id;
    }
    if (obj.point) {
      const r = sizeToRadius(obj.point.size);
      if ((x - obj.point.cx) ** 2 + (y - obj.point.cy) ** 2 <= r * r) return obj.id;
    }
  }
  return null;
}

function canvasPos(e: PointerEvent): { x: number; y: number } {
  const rect = $<HTMLCanvasElement>('editor').getBoundingClientRect();
  return { x: e.clientX - rect.left, y: e.clientY - rect.top };
}

function bindCanvas() {
  const canvas = $<HTMLCanvasElement>('editor');

  canvas.onpointerdown = (e) => {
    if (!state || !background) return;
    canvas.setPointerCapture(e.pointerId);
    const { x, y } = canvasPos(e);
    const hit = hitTest(x, y);
    if (hit !== null && !e.shiftKey) {
      state = { ...state, selectedId: hit };
      drag = { kind: 'move', id: hit, lastX: x, lastY: y, moved: false, before: JSON.stringify(state.objects) };
    } else if (hit !== null && e.shiftKey) {
      drag = { kind: 'resize', id: hit, startX: x, startY: y, curX: x, curY: y };
    } else {
      drag = { kind: 'create', startX: x, startY: y, curX: x, curY: y };
    }
    redraw();
  };

  canvas.onpointermove = (e) => {
    if (!drag || !state) return;
    const { x, y } = canvasPos(e);
    if (drag.kind === 'move') {
      const d = drag;
      const dx = x - d.lastX;
      const dy = y - d.lastY;
      if (dx !== 0 || dy !== 0) {
        // move without committing history on every pixel: commit on pointerup
        const obj = state.objects.find((o) => o.id === d.id);
        if (obj?.box) obj.box = { x0: obj.box.x0 + dx, y0: obj.box.y0 + dy, x1: obj.box.x1 + dx, y1: obj.box.y1 + dy };
        if (obj?.point) obj.point = { ...obj.point, cx: obj.point.cx + dx, cy: obj.point.cy + dy };
        d.lastX = x;
        d.lastY = y;
        d.moved = true;
        redraw();
      }
    } else {
      drag.curX = x;
      drag.curY = y;
      redraw();
    }
  };

  canvas.onpointerup = () => {
    if (!drag || !state) return;
    const d = drag;
    drag = null;
    if (d.kind === 'create') {
      if (state.mode === 'box') {
        const box = { x0: d.startX, y0: d.startY, x1: d.curX, y1: d.curY };
        if (isDegenerateBox(box)) {
          setHint('drag out a box with some area');
        } else {
          update(placeBox(state, box));
        }
      } else {
        const r = Math.hypot(d.curX - d.startX, d.curY - d.startY);
        if (r < 1) {
          setHint('click then drag outward to set the point size');
        } else {
          update(placePoint(state, { cx: d.startX, cy: d.startY, size: radiusToSize(r) }));
        }
      }
    } else if (d.kind === 'move') {
      if (d.moved) {
        // geometry was updated in place during the drag; push the pre-drag
        // snapshot so a single undo reverts the whole move
        update({
          ...state,
          undoStack: [...state.undoStack, JSON.parse(d.before)],
          redoStack: [],
        });
      }
    } else {
      const obj = state.objects.find((o) => o.id === d.id);
      if (obj?.box) {
        update(resizeBox(state, d.id, { x0: d.startX, y0: d.startY, x1: d.curX, y1: d.curY }));
      } else if (obj?.point) {
        const r = Math.hypot(d.curX - obj.point.cx, d.curY - obj.point.cy);
        update(resizePoint(state, d.id, radiusToSize(r)));
      }
    }
    redraw();
  };
}

async function doGenerate() {
  if (!state || !backgroundBase64) {
    setHint('load a background photo first');
    return;
  }
  if (generateInFlight) {
    dirtyWhileInFlight = true;
    return;
  }
  generateInFlight = true;
  $('generate').setAttribute('disabled', 'true');
  setHint('generating…');
  try {
    const seedText = $<HTMLInputElement>('seed').value.trim();
    const seed = seedText === '' ? null : Number(seedText);
    state = { ...state, seed };
    const result = await api.generate(backgroundBase64, toDocument(state), seed);
    $<HTMLImageElement>('result').src = `data:image/png;base64,${result.image}`;
    $('latency').textContent = `${result.latency_ms.toFixed(0)} ms · ${result.model_id}`;
    state = { ...state, lastImage: result.image, lastLatencyMs: result.latency_ms };
    setHint('');
  } catch (err: any) {
    const svc = err.service;
    setHint(svc ? `error (${svc.path ?? 'request'}): ${svc.error}` : String(err));
  } finally {
    generateInFlight = false;
    $('generate').removeAttribute('disabled');
    if (dirtyWhileInFlight) {
      dirtyWhileInFlight = false;
    }
  }
}

function bindControls() {
  $('generate').onclick = () => void doGenerate();
  $('undo').onclick = () => state && update(undo(state));
  $('redo').onclick = () => state && update(redo(state));
  $<HTMLSelectElement>('mode').onchange = (e) => {
    if (state) update(setMode(state, (e.target as HTMLSelectElement).value as 'box' | 'point'));
  };
  $<HTMLSelectElement>('class').onchange = (e) => {
    if (state) state = { ...state, selectedClass: (e.target as HTMLSelectElement).value };
  };

  $('export').onclick = () => {
    if (!state) return;
    const blob = new Blob([JSON.stringify(toDocument(state), null, 2)], { type: 'application/json' });
    const a = document.createElement('a');
    a.href = URL.createObjectURL(blob);
    a.download = 'layout.json';
    a.click();
    URL.revokeObjectURL(a.href);
  };

  $<HTMLInputElement>('import').onchange = async (e) => {
    const file = (e.target as HTMLInputElement).files?.[0];
    if (!file || !state) return;
    try {
      update(fromDocument(state, JSON.parse(await file.text())));
      setHint('');
    } catch (err) {
      setHint(`layout import failed: ${err}`);
    }
  };

  $<HTMLInputElement>('background-file').onchange = async (e) => {
    const file = (e.target as HTMLInputElement).files?.[0];
    if (!file) return;
    const buf = await file.arrayBuffer();
    backgroundBase64 = btoa(String.fromCharCode(...new Uint8Array(buf)));
    const img = new Image();
    img.onload = () => {
      background = img;
      const canvas = $<HTMLCanvasElement>('editor');
      canvas.width = img.width;
      canvas.height = img.height;
      const selected = $<HTMLSelectElement>('class').value || classes[0]?.name || 'cabinet';
      state = initialState(img.width, img.height, selected);
      redraw();
    };
    img.src = URL.createObjectURL(file);
  };

  document.onkeydown = (e) => {
    if (!state) return;
    if (e.key === 'Delete' && state.selectedId !== null) update(deleteObject(state, state.selectedId));
    if ((e.ctrlKey || e.metaKey) && e.key === 'z' && !e.shiftKey) update(undo(state));
    if ((e.ctrlKey || e.metaKey) && (e.key === 'y' || (e.key === 'z' && e.shiftKey))) update(redo(state));
  };
}

async function init() {
  try {
    classes = await api.classes();
  } catch {
    setHint('service unreachable; start it with: scenedecor serve');
    classes = [];
  }
  const select = $<HTMLSelectElement>('class');
  for (const c of classes) {
    const opt = document.createElement('option');
    opt.value = c.name;
    opt.textContent = c.name;
    opt.style.color = c.color;
    select.appendChild(opt);
  }
  bindCanvas();
  bindControls();
}

void init();
