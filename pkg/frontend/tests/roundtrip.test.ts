/**
 * End-to-end round trip against a live service.
 *
 * Spawns the Python HTTP service, opens a session for each of 3 phantom
 * volumes, draws a polygon on a proposed slice exactly as the UI does
 * (rasterize -> RLE -> submit), and asserts the committed state: the slice
 * joins the labeled set, the proxy overlay on it equals the drawn mask,
 * and guidance never proposes it again.
 */

import { spawn, ChildProcess } from "node:child_process";
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { Client, Guidance } from "../src/api.js";
import { rasterizePolygon } from "../src/raster.js";
import { decodeMask, encodeMask, masksEqual, countForeground } from "../src/rle.js";

const PORT = 8765;
const BASE = `http://127.0.0.1:${PORT}`;
const DIM = 16;

let server: ChildProcess;

async function waitForServer(): Promise<void> {
  const deadline = Date.now() + 60_000;
  while (Date.now() < deadline) {
    try {
      const resp = await fetch(`${BASE}/sessions/nope/metrics`);
      if (resp.status === 404) return;
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 250));
  }
  throw new Error("service did not come up within 60s");
}

beforeAll(async () => {
  server = spawn(
    "python3",
    [
      "-c",
      [
        "import uvicorn",
        "from dynaseg.service import ServiceConfig, create_app",
        `app = create_app(ServiceConfig(quota=6, inner_steps=1, channels=(2,), seed=3))`,
        `uvicorn.run(app, host='127.0.0.1', port=${PORT}, log_level='warning')`,
      ].join("\n"),
    ],
    { stdio: "ignore" },
  );
  await waitForServer();
}, 90_000);

afterAll(() => {
  server?.kill();
});

function proposalsFor(guidance: Guidance, plane: number): number[] {
  return (guidance.proposals[String(plane)] ?? []).map((p) => p.index);
}

describe("live annotation round trip", () => {
  it(
    "polygon submit commits the slice, its proxy equals the drawing, and guidance moves on",
    async () => {
      const client = new Client(BASE);
      // three independent phantom volumes, as in a small labeling campaign
      const sessions = [];
      for (let i = 0; i < 3; i++) {
        sessions.push(
          await client.createPhantomSession({
            dims: [DIM, DIM, DIM],
            radius_range: [4, 6],
            smooth_sigma: 1.0,
            noise_std: 0.03,
            seed: 10 + i,
          }),
        );
      }
      expect(new Set(sessions.map((s) => s.session_id)).size).toBe(3);

      for (const info of sessions) {
        const sid = info.session_id;
        let bundle = await client.getBundle(sid, 0, DIM / 2);
        expect(bundle.guidance.is_first).toBe(true);
        const plane = 0;
        const proposed = proposalsFor(bundle.guidance, plane);
        expect(proposed.length).toBeGreaterThan(0);
        const target = proposed[0];

        // draw a closed polygon roughly around the volume center
        const poly = [
          { x: 4, y: 4 },
          { x: 12, y: 4 },
          { x: 12, y: 12 },
          { x: 4, y: 12 },
        ];
        const drawn = rasterizePolygon(poly, DIM, DIM);
        expect(countForeground(drawn)).toBe(8 * 8);

        const result = await client.submitAnnotation(
          sid,
          plane,
          target,
          encodeMask(drawn),
          `rt-${sid}`,
        );
        expect(result.round).toBe(1);
        expect(result.status).toBe("awaiting-annotation");

        // refetch the bundle at the annotated slice
        bundle = await client.getBundle(sid, plane, target);
        expect(bundle.gamma[String(plane)]).toContain(target);
        const proxy = decodeMask(bundle.proxy_overlay, DIM, DIM);
        expect(masksEqual(proxy, drawn)).toBe(true);

        // the labeled slice is never proposed again, this round or later
        expect(bundle.guidance.is_first).toBe(false);
        expect(proposalsFor(bundle.guidance, plane)).not.toContain(target);
        const again = await client.getBundle(sid, plane, target);
        expect(proposalsFor(again.guidance, plane)).not.toContain(target);
      }

      for (const info of sessions) {
        const out = await client.deleteSession(info.session_id);
        expect(out.deleted).toBe(true);
      }
    },
    120_000,
  );
});
