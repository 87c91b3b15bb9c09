// Pure editor state and its transitions. Every mutating operation returns a
// new state and pushes the previous one onto the undo stack, so undo/redo
// restore exact snapshots.

import {
  BoxGeometry,
  LayoutDocument,
  LayoutMode,
  PointGeometry,
  SceneObject,
  parseLayout,
  serializeLayout,
} from './layout.js';

export interface EditorState {
  width: number;
  height: number;
  mode: LayoutMode;
  selectedClass: string;
  objects: SceneObject[];
  selectedId: number | null;
  nextId: number;
  undoStack: SceneObject[][];
  redoStack: SceneObject[][];
  seed: number | null;
  lastImage: string | null;
  lastLatencyMs: number | null;
}

const MIN_BOX_SIZE = 2;
const MIN_RADIUS = 1;

export function initialState(width: number, height: number, selectedClass: string): EditorState {
  return {
    width,
    height,
    mode: 'box',
    selectedClass,
    objects: [],
    selectedId: null,
    nextId: 1,
    undoStack: [],
    redoStack: [],
    seed: null,
    lastImage: null,
    lastLatencyMs: null,
  };
}

function cloneObjects(objects: SceneObject[]): SceneObject[] {
  return objects.map((o) => ({
    ...o,
    box: o.box ? { ...o.box } : undefined,
    point: o.point ? { ...o.point } : undefined,
  }));
}

function commit(state: EditorState, objects: SceneObject[]): EditorState {
  return {
    ...state,
    objects,
    undoStack: [...state.undoStack, cloneObjects(state.objects)],
    redoStack: [],
  };
}

function normalizeBox(b: BoxGeometry): BoxGeometry {
  return {
    x0: Math.min(b.x0, b.x1),
    y0: Math.min(b.y0, b.y1),
    x1: Math.max(b.x0, b.x1),
    y1: Math.max(b.y0, b.y1),
  };
}

export function isDegenerateBox(b: BoxGeometry): boolean {
  const n = normalizeBox(b);
  return n.x1 - n.x0 < MIN_BOX_SIZE || n.y1 - n.y0 < MIN_BOX_SIZE;
}

export function placeBox(state: EditorState, box: BoxGeometry): EditorState {
  if (state.mode !== 'box' || isDegenerateBox(box)) return state;
  const obj: SceneObject = { id: state.nextId, className: state.selectedClass, box: normalizeBox(box) };
  const next = commit(state, [...cloneObjects(state.objects), obj]);
  return { ...next, nextId: state.nextId + 1, selectedId: obj.id };
}

export function placePoint(state: EditorState, point: PointGeometry): EditorState {
  if (state.mode !== 'point' || Math.sqrt(point.size) < MIN_RADIUS) return state;
  const obj: SceneObject = { id: state.nextId, className: state.selectedClass, point: { ...point } };
  const next = commit(state, [...cloneObjects(state.objects), obj]);
  return { ...next, nextId: state.nextId + 1, selectedId: obj.id };
}

export function moveObject(state: EditorState, id: number, dx: number, dy: number): EditorState {
  const objects = cloneObjects(state.objects);
  const obj = objects.find((o) => o.id === id);
  if (!obj) return state;
  if (obj.box) {
    obj.box = { x0: obj.box.x0 + dx, y0: obj.box.y0 + dy, x1: obj.box.x1 + dx, y1: obj.box.y1 + dy };
  }
  if (obj.point) {
    obj.point = { ...obj.point, cx: obj.point.cx + dx, cy: obj.point.cy + dy };
  }
  return commit(state, objects);
}

export function resizeBox(state: EditorState, id: number, box: BoxGeometry): EditorState {
  if (isDegenerateBox(box)) return state;
  const objects = cloneObjects(state.objects);
  const obj = objects.find((o) => o.id === id);
  if (!obj || !obj.box) return state;
  obj.box = normalizeBox(box);
  return commit(state, objects);
}

export function resizePoint(state: EditorState, id: number, size: number): EditorState {
  if (Math.sqrt(size) < MIN_RADIUS) return state;
  const objects = cloneObjects(state.objects);
  const obj = objects.find((o) => o.id === id);
  if (!obj || !obj.point) return state;
  obj.point = { ...obj.point, size };
  return commit(state, objects);
}

export function deleteObject(state: EditorState, id: number): EditorState {
  if (!state.objects.some((o) => o.id === id)) return state;
  const next = commit(
    state,
    cloneObjects(state.objects).filter((o) => o.id !== id),
  );
  return { ...next, selectedId: state.selectedId === id ? null : state.selectedId };
}

export function undo(state: EditorState): EditorState {
  const prev = state.undoStack[state.undoStack.length - 1];
  if (!prev) return state;
  return {
    ...state,
    objects: cloneObjects(prev),
    undoStack: state.undoStack.slice(0, -1),
    redoStack: [...state.redoStack, cloneObjects(state.objects)],
  };
}

export function redo(state: EditorState): EditorState {
  const next = state.redoStack[state.redoStack.length - 1];
  if (!next) return state;
  return {
    ...state,
    objects: cloneObjects(next),
    redoStack: state.redoStack.slice(0, -1),
    undoStack: [...state.undoStack, cloneObjects(state.objects)],
  };
}

export function setMode(state: EditorState, mode: LayoutMode): EditorState {
  if (mode === state.mode) return state;
  // geometry kinds don't mix within one document; switching modes clears
  const next = commit(state, []);
  return { ...next, mode, selectedId: null };
}

export function toDocument(state: EditorState): LayoutDocument {
  return serializeLayout(state.objects, state.mode, state.width, state.height);
}

export function fromDocument(state: EditorState, doc: LayoutDocument): EditorState {
  const { objects, mode } = parseLayout(doc);
  const next = commit(state, objects);
  return {
    ...next,
    mode,
    width: doc.canvas.width,
    height: doc.canvas.height,
    nextId: objects.length + 1,
    selectedId: null,
  };
}
