import { describe, expect, it } from "vitest";
import {
  Point,
  mergeDrawing,
  pointInPolygon,
  rasterizeBrush,
  rasterizePolygon,
} from "../src/raster.js";
import { countForeground, makeMask } from "../src/rle.js";

/** Independent oracle: count pixel centers inside the polygon. */
function bruteForceCount(poly: Point[], height: number, width: number): number {
  let n = 0;
  for (let row = 0; row < height; row++) {
    for (let col = 0; col < width; col++) {
      if (pointInPolygon(col + 0.5, row + 0.5, poly)) n++;
    }
  }
  return n;
}

describe("polygon rasterization", () => {
  it("an axis-aligned square covers exactly its interior pixels", () => {
    // corners on pixel boundaries: pixels (2..5) x (3..7) have centers inside
    const poly: Point[] = [
      { x: 3, y: 2 },
      { x: 8, y: 2 },
      { x: 8, y: 6 },
      { x: 3, y: 6 },
    ];
    const mask = rasterizePolygon(poly, 10, 12);
    expect(countForeground(mask)).toBe(5 * 4);
    for (let row = 2; row < 6; row++) {
      for (let col = 3; col < 8; col++) {
        expect(mask.data[row * 12 + col]).toBe(1);
      }
    }
  });

  it("matches the point-in-polygon oracle on 25 random polygons", () => {
    let s = 7;
    const next = () => {
      s = (s * 1103515245 + 12345) & 0x7fffffff;
      return s / 0x7fffffff;
    };
    for (let trial = 0; trial < 25; trial++) {
      const k = 3 + Math.floor(next() * 5);
      const poly: Point[] = [];
      for (let i = 0; i < k; i++) {
        poly.push({ x: next() * 16, y: next() * 16 });
      }
      const mask = rasterizePolygon(poly, 16, 16);
      expect(countForeground(mask)).toBe(bruteForceCount(poly, 16, 16));
    }
  });

  it("clips polygons that extend past the slice", () => {
    const poly: Point[] = [
      { x: -5, y: -5 },
      { x: 20, y: -5 },
      { x: 20, y: 20 },
      { x: -5, y: 20 },
    ];
    const mask = rasterizePolygon(poly, 8, 8);
    expect(countForeground(mask)).toBe(64);
  });

  it("rejects degenerate polygons", () => {
    expect(() => rasterizePolygon([{ x: 0, y: 0 }, { x: 1, y: 1 }], 4, 4)).toThrow(
      /3 vertices/,
    );
  });
});

describe("brush rasterization", () => {
  it("a single stamp covers the pixels within the radius", () => {
    const mask = rasterizeBrush([{ x: 4, y: 4 }], 2, 8, 8);
    const n = countForeground(mask);
    // disc of radius 2 over pixel centers: 12 pixels (centers at half-integers)
    expect(n).toBe(12);
    expect(mask.data[4 * 8 + 4]).toBe(1);
  });

  it("a fast stroke stays connected between samples", () => {
    const mask = rasterizeBrush([{ x: 1, y: 4 }, { x: 14, y: 4 }], 1, 8, 16);
    for (let col = 1; col < 14; col++) {
      expect(mask.data[4 * 16 + col]).toBe(1);
    }
  });

  it("clips to the slice bounds", () => {
    const mask = rasterizeBrush([{ x: 0, y: 0 }], 3, 6, 6);
    expect(countForeground(mask)).toBeGreaterThan(0);
    expect(countForeground(mask)).toBeLessThan(36);
  });

  it("rejects empty strokes and non-positive radii", () => {
    expect(() => rasterizeBrush([], 1, 4, 4)).toThrow(/empty/);
    expect(() => rasterizeBrush([{ x: 1, y: 1 }], 0, 4, 4)).toThrow(/radius/);
  });
});

describe("drawing merge", () => {
  it("ORs two gestures", () => {
    const a = makeMask(2, 2);
    a.data[0] = 1;
    const b = makeMask(2, 2);
    b.data[3] = 1;
    const merged = mergeDrawing(a, b);
    expect(Array.from(merged.data)).toEqual([1, 0, 0, 1]);
  });

  it("rejects mismatched dimensions", () => {
    expect(() => mergeDrawing(makeMask(2, 2), makeMask(2, 3))).toThrow(/mismatch/);
  });
});
