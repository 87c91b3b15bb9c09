// Layout document shared with the server: one object per placed item,
// box geometry in source-image pixels, point size in squared-pixel units.

export const LAYOUT_VERSION = 1;

export interface BoxGeometry {
  x0: number;
  y0: number;
  x1: number;
  y1: number;
}

export interface PointGeometry {
  cx: number;
  cy: number;
  size: number;
}

export type LayoutMode = 'box' | 'point';

export interface SceneObject {
  id: number;
  className: string;
  box?: BoxGeometry;
  point?: PointGeometry;
}

export interface LayoutDocument {
  version: number;
  mode: LayoutMode;
  canvas: { width: number; height: number };
  objects: Array<{ class: string; box?: BoxGeometry; point?: PointGeometry }>;
}

// The drawn circle is the e^{-1} contour of exp(-d^2/s): that contour sits at
// d = sqrt(s), so radius r maps to size s = r^2.
export function radiusToSize(r: number): number {
  return r * r;
}

export function sizeToRadius(s: number): number {
  return Math.sqrt(s);
}

export function serializeLayout(
  objects: SceneObject[],
  mode: LayoutMode,
  width: number,
  height: number,
): LayoutDocument {
  return {
    version: LAYOUT_VERSION,
    mode,
    canvas: { width, height },
    objects: objects.map((o) =>
      mode === 'box'
        ? { class: o.className, box: { ...o.box! } }
        : { class: o.className, point: { ...o.point! } },
    ),
  };
}

export function parseLayout(doc: LayoutDocument): { objects: SceneObject[]; mode: LayoutMode } {
  if (doc.version !== LAYOUT_VERSION) {
    throw new Error(`unsupported layout version ${doc.version}`);
  }
  if (doc.mode !== 'box' && doc.mode !== 'point') {
    throw new Error(`unknown mode ${doc.mode}`);
  }
  const objects = doc.objects.map((o, i) => {
    const geometry = doc.mode === 'box' ? o.box : o.point;
    if (!geometry) {
      throw new Error(`objects[${i}] is missing its ${doc.mode} geometry`);
    }
    return doc.mode === 'box'
      ? { id: i + 1, className: o.class, box: { ...o.box! } }
      : { id: i + 1, className: o.class, point: { ...o.point! } };
  });
  return { objects, mode: doc.mode };
}
