/**
 * Run-length encoding for 2D binary masks on the wire.
 *
 * Format: `{rows: [[start, len, start, len, ...], ...]}` with one list per
 * mask row and alternating (start, length) runs of foreground pixels.
 * Starts are 0-based column offsets within the row.
 */

export interface RleMask {
  rows: number[][];
}

/** A 2D binary mask stored row-major as 0/1 bytes. */
export interface Mask2D {
  data: Uint8Array;
  height: number;
  width: number;
}

export function makeMask(height: number, width: number): Mask2D {
  if (height <= 0 || width <= 0) throw new Error("mask dims must be positive");
  return { data: new Uint8Array(height * width), height, width };
}

export function encodeMask(mask: Mask2D): RleMask {
  const rows: number[][] = [];
  for (let i = 0; i < mask.height; i++) {
    const runs: number[] = [];
    let start = -1;
    for (let j = 0; j <= mask.width; j++) {
      const on = j < mask.width && mask.data[i * mask.width + j] !== 0;
      if (on && start < 0) start = j;
      if (!on && start >= 0) {
        runs.push(start, j - start);
        start = -1;
      }
    }
    rows.push(runs);
  }
  return { rows };
}

export function decodeMask(payload: RleMask, height: number, width: number): Mask2D {
  if (!Array.isArray(payload.rows) || payload.rows.length !== height) {
    throw new Error(`RLE payload must have ${height} rows`);
  }
  const mask = makeMask(height, width);
  payload.rows.forEach((runs, i) => {
    if (runs.length % 2 !== 0) {
      throw new Error(`row ${i}: runs must come in (start, len) pairs`);
    }
    for (let k = 0; k < runs.length; k += 2) {
      const start = runs[k];
      const len = runs[k + 1];
      if (len < 0 || start < 0 || start + len > width) {
        throw new Error(`row ${i}: run (${start}, ${len}) out of bounds`);
      }
      mask.data.fill(1, i * width + start, i * width + start + len);
    }
  });
  return mask;
}

export function countForeground(mask: Mask2D): number {
  let n = 0;
  for (const v of mask.data) n += v;
  return n;
}

export function masksEqual(a: Mask2D, b: Mask2D): boolean {
  if (a.height !== b.height || a.width !== b.width) return false;
  for (let i = 0; i < a.data.length; i++) {
    if ((a.data[i] !== 0) !== (b.data[i] !== 0)) return false;
  }
  return true;
}
