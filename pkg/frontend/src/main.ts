/**
 * Browser entry point: wires the session controller to a canvas viewer,
 * a slice scrubber, overlay toggles, and polygon/brush tools.
 */

import { Client, decodeSliceImage } from "./api.js";
import { decodeMask, Mask2D } from "./rle.js";
import { Point, rasterizeBrush, rasterizePolygon, mergeDrawing } from "./raster.js";
import { composeSlice, scrubberTicks } from "./render.js";
import { SessionController } from "./state.js";

const SCALE = 12;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function run(): void {
  const client = new Client("");
  const controller = new SessionController(client);
  const canvas = el<HTMLCanvasElement>("viewer");
  const maybeCtx = canvas.getContext("2d");
  if (!maybeCtx) throw new Error("2d context unavailable");
  const ctx = maybeCtx;
  const scrubber = el<HTMLDivElement>("scrubber");
  const banner = el<HTMLDivElement>("banner");
  const status = el<HTMLDivElement>("status");
  const submitBtn = el<HTMLButtonElement>("submit");
  let polygon: Point[] = [];

  function sliceShape(): [number, number] {
    const bundle = controller.state.bundle;
    if (!bundle) throw new Error("no bundle");
    return [bundle.image_shape[0], bundle.image_shape[1]];
  }

  function redraw(): void {
    const st = controller.state;
    const bundle = st.bundle;
    banner.textContent = st.errorBanner ?? "";
    if (!bundle) return;
    const [h, w] = sliceShape();
    canvas.width = w * SCALE;
    canvas.height = h * SCALE;
    const rgba = composeSlice(
      {
        image: decodeSliceImage(bundle.image, h, w),
        height: h,
        width: w,
        proxy: decodeMask(bundle.proxy_overlay, h, w),
        prediction: decodeMask(bundle.pred_overlay, h, w),
        drawing: st.drawing ?? undefined,
      },
      st.toggles,
    );
    const img = new ImageData(new Uint8ClampedArray(rgba), w, h);
    createImageBitmap(img).then((bmp) => {
      ctx.imageSmoothingEnabled = false;
      ctx.drawImage(bmp, 0, 0, canvas.width, canvas.height);
      // in-progress polygon outline
      if (st.tool === "polygon" && polygon.length > 0) {
        ctx.strokeStyle = "#40ff60";
        ctx.beginPath();
        polygon.forEach((p, i) => {
          const x = p.x * SCALE;
          const y = p.y * SCALE;
          if (i === 0) ctx.moveTo(x, y);
          else ctx.lineTo(x, y);
        });
        ctx.stroke();
      }
    });
    const ticks = scrubberTicks(st.plane, st.dims[st.plane] ?? 0, bundle.gamma, bundle.guidance);
    scrubber.innerHTML = "";
    for (const tick of ticks) {
      const node = document.createElement("button");
      node.className =
        "tick" + (tick.labeled ? " labeled" : "") + (tick.proposed ? " proposed" : "");
      node.textContent = String(tick.index);
      if (tick.proposed && tick.mass !== null) {
        node.title = `proposal mass ${tick.mass.toFixed(3)}`;
      }
      node.onclick = () => {
        polygon = [];
        controller.goTo(st.plane, tick.index).then(redraw, redraw);
      };
      scrubber.appendChild(node);
    }
    status.textContent =
      `round ${st.round}/${st.quota} | ${st.phase}` +
      (st.lastResult ? ` | dice(proxy, pred) ${st.lastResult.dice_proxy_pred.toFixed(3)}` : "");
    submitBtn.disabled = !controller.canSubmit();
  }

  canvas.addEventListener("click", (ev) => {
    if (controller.state.phase !== "awaiting-annotation") return;
    const rect = canvas.getBoundingClientRect();
    const x = ((ev.clientX - rect.left) / rect.width) * sliceShape()[1];
    const y = ((ev.clientY - rect.top) / rect.height) * sliceShape()[0];
    const [h, w] = sliceShape();
    if (controller.state.tool === "polygon") {
      polygon.push({ x, y });
      if (polygon.length >= 3) {
        controller.setDrawing(rasterizePolygon(polygon, h, w));
      }
    } else {
      const stamp = rasterizeBrush([{ x, y }], 1.5, h, w);
      const base: Mask2D | null = controller.state.drawing;
      controller.setDrawing(base ? mergeDrawing(base, stamp) : stamp);
    }
    redraw();
  });

  el<HTMLButtonElement>("tool-polygon").onclick = () => {
    controller.state.tool = "polygon";
    polygon = [];
    controller.setDrawing(null);
    redraw();
  };
  el<HTMLButtonElement>("tool-brush").onclick = () => {
    controller.state.tool = "brush";
    polygon = [];
    controller.setDrawing(null);
    redraw();
  };
  for (const key of ["proxy", "prediction", "residual", "gammaMarkers"] as const) {
    el<HTMLInputElement>(`toggle-${key}`).onchange = (ev) => {
      controller.state.toggles[key] = (ev.target as HTMLInputElement).checked;
      redraw();
    };
  }
  submitBtn.onclick = () => {
    polygon = [];
    controller.submit().then(redraw, redraw);
  };
  el<HTMLButtonElement>("start").onclick = () => {
    controller
      .start({ dims: [24, 24, 24], radius_range: [6, 8], noise_std: 0.03, seed: 1 })
      .then(redraw, redraw);
  };
}

run();
