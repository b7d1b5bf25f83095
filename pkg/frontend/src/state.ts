/**
 * Single-session view state machine.
 *
 * One in-flight mutation at a time, submission is refused client-side for
 * already-labeled slices and completed sessions, and displayed overlays
 * always come from the last committed round's bundle.
 */

import { AnnotationResult, ApiError, Bundle, Client } from "./api.js";
import { Mask2D, encodeMask, countForeground } from "./rle.js";

export type Phase =
  | "idle"
  | "loading"
  | "awaiting-annotation"
  | "training"
  | "complete"
  | "error";

export type Tool = "polygon" | "brush";

export interface ViewState {
  sessionId: string | null;
  dims: number[];
  plane: number;
  index: number;
  phase: Phase;
  round: number;
  quota: number;
  bundle: Bundle | null;
  toggles: {
    proxy: boolean;
    prediction: boolean;
    residual: boolean;
    gammaMarkers: boolean;
  };
  tool: Tool;
  drawing: Mask2D | null;
  /** Banner text for a retryable failure; state is otherwise preserved. */
  errorBanner: string | null;
  lastResult: AnnotationResult | null;
}

export function initialState(): ViewState {
  return {
    sessionId: null,
    dims: [],
    plane: 0,
    index: 0,
    phase: "idle",
    round: 0,
    quota: 0,
    bundle: null,
    toggles: { proxy: true, prediction: true, residual: false, gammaMarkers: true },
    tool: "polygon",
    drawing: null,
    errorBanner: null,
    lastResult: null,
  };
}

export class SessionController {
  state: ViewState = initialState();
  private inFlight = false;

  constructor(private readonly client: Client) {}

  get busy(): boolean {
    return this.inFlight;
  }

  isLabeled(plane: number, index: number): boolean {
    const bundle = this.state.bundle;
    if (!bundle) return false;
    return (bundle.gamma[String(plane)] ?? []).includes(index);
  }

  /** Submission is allowed only between rounds on an unlabeled slice. */
  canSubmit(): boolean {
    return (
      this.state.phase === "awaiting-annotation" &&
      !this.inFlight &&
      this.state.drawing !== null &&
      countForeground(this.state.drawing) > 0 &&
      !this.isLabeled(this.state.plane, this.state.index)
    );
  }

  async start(phantomSpec: Record<string, unknown>): Promise<void> {
    if (this.inFlight) throw new Error("mutation already in flight");
    this.inFlight = true;
    this.state.phase = "loading";
    try {
      const info = await this.client.createPhantomSession(phantomSpec);
      this.state.sessionId = info.session_id;
      this.state.dims = info.dims;
      this.state.quota = info.quota;
      this.state.round = info.round;
      this.state.index = Math.floor(info.dims[0] / 2);
      this.state.errorBanner = null;
    } catch (err) {
      this.state.phase = "error";
      this.state.errorBanner = describe(err);
      throw err;
    } finally {
      this.inFlight = false;
    }
    await this.refresh();
  }

  async refresh(): Promise<void> {
    if (!this.state.sessionId) throw new Error("no session");
    try {
      const bundle = await this.client.getBundle(
        this.state.sessionId,
        this.state.plane,
        this.state.index,
      );
      this.state.bundle = bundle;
      this.state.round = bundle.round;
      this.state.phase = bundle.status === "complete" ? "complete" : "awaiting-annotation";
      this.state.errorBanner = null;
    } catch (err) {
      // network failure: keep the last committed bundle, surface a banner
      this.state.errorBanner = describe(err);
      throw err;
    }
  }

  async goTo(plane: number, index: number): Promise<void> {
    this.state.plane = plane;
    this.state.index = index;
    this.state.drawing = null;
    await this.refresh();
  }

  setDrawing(mask: Mask2D | null): void {
    this.state.drawing = mask;
  }

  async submit(idempotencyKey?: string): Promise<AnnotationResult> {
    if (!this.state.sessionId) throw new Error("no session");
    if (this.inFlight) throw new Error("a round is already training");
    if (this.state.phase === "complete") throw new Error("annotation quota reached");
    if (this.isLabeled(this.state.plane, this.state.index)) {
      throw new Error("slice already labeled");
    }
    const drawing = this.state.drawing;
    if (!drawing || countForeground(drawing) === 0) {
      throw new Error("nothing drawn");
    }
    this.inFlight = true;
    this.state.phase = "training";
    try {
      const result = await this.client.submitAnnotation(
        this.state.sessionId,
        this.state.plane,
        this.state.index,
        encodeMask(drawing),
        idempotencyKey,
      );
      this.state.lastResult = result;
      this.state.round = result.round;
      this.state.drawing = null;
      this.state.errorBanner = null;
      this.inFlight = false;
      await this.refresh();
      return result;
    } catch (err) {
      this.inFlight = false;
      if (err instanceof ApiError) {
        // server-side validation: surface inline, resume annotating
        this.state.phase = "awaiting-annotation";
        this.state.errorBanner = `${err.code}: ${err.message}`;
      } else {
        this.state.errorBanner = describe(err);
      }
      throw err;
    }
  }
}

function describe(err: unknown): string {
  return err instanceof Error ? err.message : String(err);
}
