/**
 * Slice compositing: grayscale base image with alpha-blended overlays.
 *
 * Everything here operates on plain RGBA byte buffers so the logic is
 * host-independent; the canvas layer just blits the result via ImageData.
 */

import { Mask2D } from "./rle.js";
import { Guidance } from "./api.js";

export interface OverlayToggles {
  proxy: boolean;
  prediction: boolean;
  residual: boolean;
  gammaMarkers: boolean;
}

export interface SliceLayers {
  image: Float32Array;
  height: number;
  width: number;
  proxy?: Mask2D;
  prediction?: Mask2D;
  /** Normalized per-pixel residual heat in [0, 1]. */
  residual?: Float32Array;
  /** The user's in-progress drawing, shown above everything else. */
  drawing?: Mask2D;
}

const PROXY_COLOR: [number, number, number, number] = [64, 160, 255, 96];
const PRED_COLOR: [number, number, number, number] = [255, 176, 32, 96];
const DRAW_COLOR: [number, number, number, number] = [64, 255, 96, 128];

/**
 * Fixed perceptually-uniform ramp (viridis control points, linearly
 * interpolated) used for the residual heatmap and its legend.
 */
export const RESIDUAL_RAMP: [number, number, number][] = [
  [68, 1, 84],
  [59, 82, 139],
  [33, 145, 140],
  [94, 201, 98],
  [253, 231, 37],
];

export function rampColor(value: number): [number, number, number] {
  const v = Math.min(1, Math.max(0, value));
  const pos = v * (RESIDUAL_RAMP.length - 1);
  const lo = Math.floor(pos);
  const hi = Math.min(RESIDUAL_RAMP.length - 1, lo + 1);
  const t = pos - lo;
  return [
    Math.round(RESIDUAL_RAMP[lo][0] + t * (RESIDUAL_RAMP[hi][0] - RESIDUAL_RAMP[lo][0])),
    Math.round(RESIDUAL_RAMP[lo][1] + t * (RESIDUAL_RAMP[hi][1] - RESIDUAL_RAMP[lo][1])),
    Math.round(RESIDUAL_RAMP[lo][2] + t * (RESIDUAL_RAMP[hi][2] - RESIDUAL_RAMP[lo][2])),
  ];
}

function blend(rgba: Uint8ClampedArray, px: number, color: [number, number, number, number]): void {
  const a = color[3] / 255;
  rgba[px] = Math.round(rgba[px] * (1 - a) + color[0] * a);
  rgba[px + 1] = Math.round(rgba[px + 1] * (1 - a) + color[1] * a);
  rgba[px + 2] = Math.round(rgba[px + 2] * (1 - a) + color[2] * a);
  rgba[px + 3] = 255;
}

/** Compose the slice and enabled overlays into an RGBA buffer. */
export function composeSlice(layers: SliceLayers, toggles: OverlayToggles): Uint8ClampedArray {
  const { height, width, image } = layers;
  if (image.length !== height * width) {
    throw new Error(`image has ${image.length} pixels, expected ${height * width}`);
  }
  for (const [name, mask] of [
    ["proxy", layers.proxy],
    ["prediction", layers.prediction],
    ["drawing", layers.drawing],
  ] as const) {
    if (mask && (mask.height !== height || mask.width !== width)) {
      throw new Error(`${name} overlay is ${mask.height}x${mask.width}, slice is ${height}x${width}`);
    }
  }
  if (layers.residual && layers.residual.length !== height * width) {
    throw new Error("residual overlay size mismatch");
  }
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of image) {
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  const span = hi > lo ? hi - lo : 1;
  const rgba = new Uint8ClampedArray(height * width * 4);
  for (let i = 0; i < height * width; i++) {
    const g = Math.round(((image[i] - lo) / span) * 255);
    rgba[i * 4] = g;
    rgba[i * 4 + 1] = g;
    rgba[i * 4 + 2] = g;
    rgba[i * 4 + 3] = 255;
  }
  if (toggles.residual && layers.residual) {
    for (let i = 0; i < height * width; i++) {
      const [r, g, b] = rampColor(layers.residual[i]);
      blend(rgba, i * 4, [r, g, b, Math.round(160 * Math.min(1, layers.residual[i]))]);
    }
  }
  if (toggles.proxy && layers.proxy) {
    for (let i = 0; i < height * width; i++) {
      if (layers.proxy.data[i]) blend(rgba, i * 4, PROXY_COLOR);
    }
  }
  if (toggles.prediction && layers.prediction) {
    for (let i = 0; i < height * width; i++) {
      if (layers.prediction.data[i]) blend(rgba, i * 4, PRED_COLOR);
    }
  }
  if (layers.drawing) {
    for (let i = 0; i < height * width; i++) {
      if (layers.drawing.data[i]) blend(rgba, i * 4, DRAW_COLOR);
    }
  }
  return rgba;
}

export interface ScrubberTick {
  index: number;
  labeled: boolean;
  proposed: boolean;
  /** Normalized proposal mass, null for the random first round. */
  mass: number | null;
}

/** Ticks for the slice scrubber: labeled slices marked, proposals highlighted. */
export function scrubberTicks(
  plane: number,
  count: number,
  gamma: Record<string, number[]>,
  guidance: Guidance | Record<string, never>,
): ScrubberTick[] {
  const labeled = new Set(gamma[String(plane)] ?? []);
  const proposals = new Map<number, number | null>();
  if ("proposals" in guidance) {
    for (const p of guidance.proposals[String(plane)] ?? []) {
      proposals.set(p.index, p.mass);
    }
  }
  const ticks: ScrubberTick[] = [];
  for (let index = 0; index < count; index++) {
    ticks.push({
      index,
      labeled: labeled.has(index),
      proposed: proposals.has(index),
      mass: proposals.get(index) ?? null,
    });
  }
  return ticks;
}
