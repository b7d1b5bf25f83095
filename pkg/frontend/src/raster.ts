/**
 * Rasterization of annotation gestures to binary slice masks.
 *
 * Polygons use even-odd scanline filling sampled at pixel centers, so a
 * closed boundary drawn around a region selects exactly the pixels whose
 * centers fall inside it. Brush strokes stamp discs along each segment.
 */

import { Mask2D, makeMask } from "./rle.js";

export interface Point {
  x: number; // column coordinate
  y: number; // row coordinate
}

/** Pixel-center point-in-polygon test (even-odd rule). */
export function pointInPolygon(px: number, py: number, poly: Point[]): boolean {
  let inside = false;
  for (let i = 0, j = poly.length - 1; i < poly.length; j = i++) {
    const yi = poly[i].y;
    const yj = poly[j].y;
    if (yi > py !== yj > py) {
      const xCross = poly[j].x + ((py - yj) / (yi - yj)) * (poly[i].x - poly[j].x);
      if (px < xCross) inside = !inside;
    }
  }
  return inside;
}

/** Fill a closed polygon into a height x width mask (even-odd scanline). */
export function rasterizePolygon(poly: Point[], height: number, width: number): Mask2D {
  if (poly.length < 3) throw new Error("polygon needs at least 3 vertices");
  const mask = makeMask(height, width);
  let yMin = Infinity;
  let yMax = -Infinity;
  for (const p of poly) {
    yMin = Math.min(yMin, p.y);
    yMax = Math.max(yMax, p.y);
  }
  const rowLo = Math.max(0, Math.floor(yMin));
  const rowHi = Math.min(height - 1, Math.ceil(yMax));
  for (let row = rowLo; row <= rowHi; row++) {
    const py = row + 0.5;
    // gather x crossings of the scanline through the pixel-center row
    const xs: number[] = [];
    for (let i = 0, j = poly.length - 1; i < poly.length; j = i++) {
      const yi = poly[i].y;
      const yj = poly[j].y;
      if (yi > py !== yj > py) {
        xs.push(poly[j].x + ((py - yj) / (yi - yj)) * (poly[i].x - poly[j].x));
      }
    }
    xs.sort((a, b) => a - b);
    for (let k = 0; k + 1 < xs.length; k += 2) {
      const lo = Math.max(0, Math.ceil(xs[k] - 0.5));
      const hi = Math.min(width - 1, Math.floor(xs[k + 1] - 0.5 - 1e-9));
      if (hi >= lo) mask.data.fill(1, row * width + lo, row * width + hi + 1);
    }
  }
  return mask;
}

function stampDisc(mask: Mask2D, cx: number, cy: number, radius: number): void {
  const r2 = radius * radius;
  const rowLo = Math.max(0, Math.floor(cy - radius));
  const rowHi = Math.min(mask.height - 1, Math.ceil(cy + radius));
  for (let row = rowLo; row <= rowHi; row++) {
    const colLo = Math.max(0, Math.floor(cx - radius));
    const colHi = Math.min(mask.width - 1, Math.ceil(cx + radius));
    for (let col = colLo; col <= colHi; col++) {
      const dx = col + 0.5 - cx;
      const dy = row + 0.5 - cy;
      if (dx * dx + dy * dy <= r2) mask.data[row * mask.width + col] = 1;
    }
  }
}

/** Stamp a brush stroke (polyline of centers) with a circular tip. */
export function rasterizeBrush(
  stroke: Point[],
  radius: number,
  height: number,
  width: number,
): Mask2D {
  if (stroke.length === 0) throw new Error("empty brush stroke");
  if (radius <= 0) throw new Error("brush radius must be positive");
  const mask = makeMask(height, width);
  for (let i = 0; i < stroke.length; i++) {
    stampDisc(mask, stroke[i].x, stroke[i].y, radius);
    if (i > 0) {
      // interpolate along the segment so fast strokes stay connected
      const a = stroke[i - 1];
      const b = stroke[i];
      const dist = Math.hypot(b.x - a.x, b.y - a.y);
      const steps = Math.ceil(dist / Math.max(0.5, radius / 2));
      for (let s = 1; s < steps; s++) {
        const t = s / steps;
        stampDisc(mask, a.x + t * (b.x - a.x), a.y + t * (b.y - a.y), radius);
      }
    }
  }
  return mask;
}

/** Merge a gesture mask into an existing drawing (logical OR). */
export function mergeDrawing(base: Mask2D, addition: Mask2D): Mask2D {
  if (base.height !== addition.height || base.width !== addition.width) {
    throw new Error("drawing dimension mismatch");
  }
  const out = makeMask(base.height, base.width);
  for (let i = 0; i < out.data.length; i++) {
    out.data[i] = base.data[i] | addition.data[i];
  }
  return out;
}
