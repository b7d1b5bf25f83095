import { describe, expect, it } from "vitest";
import { composeSlice, rampColor, scrubberTicks } from "../src/render.js";
import { makeMask } from "../src/rle.js";

const TOGGLES_OFF = { proxy: false, prediction: false, residual: false, gammaMarkers: false };
const TOGGLES_ON = { proxy: true, prediction: true, residual: true, gammaMarkers: true };

function gradientImage(height: number, width: number): Float32Array {
  const img = new Float32Array(height * width);
  for (let i = 0; i < img.length; i++) img[i] = i;
  return img;
}

describe("slice compositing", () => {
  it("all toggles off renders the raw grayscale slice", () => {
    const proxy = makeMask(4, 5);
    proxy.data.fill(1);
    const rgba = composeSlice(
      { image: gradientImage(4, 5), height: 4, width: 5, proxy },
      TOGGLES_OFF,
    );
    expect(rgba.length).toBe(4 * 5 * 4);
    for (let i = 0; i < 20; i++) {
      expect(rgba[i * 4]).toBe(rgba[i * 4 + 1]);
      expect(rgba[i * 4 + 1]).toBe(rgba[i * 4 + 2]);
      expect(rgba[i * 4 + 3]).toBe(255);
    }
    expect(rgba[0]).toBe(0);
    expect(rgba[19 * 4]).toBe(255);
  });

  it("output dimensions always equal the slice dimensions", () => {
    for (const [h, w] of [[3, 7], [16, 16], [1, 9]] as const) {
      const rgba = composeSlice(
        { image: gradientImage(h, w), height: h, width: w },
        TOGGLES_ON,
      );
      expect(rgba.length).toBe(h * w * 4);
    }
  });

  it("enabled proxy overlay tints exactly its foreground pixels", () => {
    const proxy = makeMask(2, 2);
    proxy.data[1] = 1;
    const image = new Float32Array([1, 1, 1, 1]); // constant base -> uniform gray
    const rgba = composeSlice(
      { image, height: 2, width: 2, proxy },
      { ...TOGGLES_OFF, proxy: true },
    );
    const tinted = rgba[4] !== rgba[5] || rgba[5] !== rgba[6];
    expect(tinted).toBe(true);
    expect(rgba[0]).toBe(rgba[1]);
    expect(rgba[1]).toBe(rgba[2]);
  });

  it("rejects overlays whose dimensions differ from the slice", () => {
    expect(() =>
      composeSlice(
        { image: gradientImage(4, 4), height: 4, width: 4, proxy: makeMask(4, 5) },
        TOGGLES_ON,
      ),
    ).toThrow(/4x5/);
  });

  it("residual ramp is the fixed gradient with clamped ends", () => {
    expect(rampColor(0)).toEqual([68, 1, 84]);
    expect(rampColor(1)).toEqual([253, 231, 37]);
    expect(rampColor(-5)).toEqual(rampColor(0));
    expect(rampColor(9)).toEqual(rampColor(1));
    const mid = rampColor(0.5);
    expect(mid).toEqual([33, 145, 140]);
  });
});

describe("scrubber ticks", () => {
  const gamma = { "0": [2, 5], "1": [], "2": [] };
  const guidance = {
    is_first: false,
    proposals: { "0": [{ index: 7, mass: 0.6 }, { index: 1, mass: 0.4 }], "1": [] },
  };

  it("marks labeled slices and highlights proposals with their mass", () => {
    const ticks = scrubberTicks(0, 10, gamma, guidance);
    expect(ticks).toHaveLength(10);
    expect(ticks.filter((t) => t.labeled).map((t) => t.index)).toEqual([2, 5]);
    expect(ticks.filter((t) => t.proposed).map((t) => t.index)).toEqual([1, 7]);
    expect(ticks[7].mass).toBeCloseTo(0.6);
    expect(ticks[3].mass).toBeNull();
  });

  it("a proposal list of 2 yields exactly 2 highlighted ticks", () => {
    const ticks = scrubberTicks(0, 10, gamma, guidance);
    expect(ticks.filter((t) => t.proposed)).toHaveLength(2);
  });

  it("handles the completed-session empty guidance object", () => {
    const ticks = scrubberTicks(0, 4, gamma, {});
    expect(ticks.every((t) => !t.proposed)).toBe(true);
  });
});
