// Coordinate conversions between the displayed editor canvas and the
// server's square model canvas, using the letterbox transform the service
// reports with each generation.

export interface LetterboxTransform {
  scale: number;
  offset_x: number;
  offset_y: number;
  canvas_size: number;
}

export function sourceToModel(
  x: number,
  y: number,
  t: LetterboxTransform,
): { x: number; y: number } {
  return { x: x * t.scale + t.offset_x, y: y * t.scale + t.offset_y };
}

export function modelToSource(
  x: number,
  y: number,
  t: LetterboxTransform,
): { x: number; y: number } {
  return { x: (x - t.offset_x) / t.scale, y: (y - t.offset_y) / t.scale };
}

// Mirror of the server's letterbox rule, so the overlay can be drawn before
// the first generation response arrives.
export function letterboxFor(width: number, height: number, size: number): LetterboxTransform {
  const scale = size / Math.max(width, height);
  const nw = Math.max(1, Math.round(width * scale));
  const nh = Math.max(1, Math.round(height * scale));
  return {
    scale,
    offset_x: Math.floor((size - nw) / 2),
    offset_y: Math.floor((size - nh) / 2),
    canvas_size: size,
  };
}
