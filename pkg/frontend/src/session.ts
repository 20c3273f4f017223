import { ApiClient, ValidationError } from "./api.js";
import { ScriptModel, exportScript } from "./script.js";
import type { CameraSpec, LayerEditJson, SceneInfo } from "./types.js";

export interface PreviewImage {
  seq: number;
  frame: number;
  bytes: Uint8Array;
}

export type Scheduler = (fn: () => void, ms: number) => () => void;

const defaultScheduler: Scheduler = (fn, ms) => {
  const h = setTimeout(fn, ms);
  return () => clearTimeout(h);
};

export interface SessionOptions {
  debounceMs?: number;
  seed?: number;
  resolution?: [number, number];
  scheduler?: Scheduler;
  onFrame?: (img: PreviewImage) => void;
  onError?: (message: string) => void;
}

/**
 * One viewport's editing state: the working script, the viewing pose,
 * and the preview pipeline against the render service.
 *
 * The working script is only ever replaced by a version the service
 * validated; a gesture that produces violations is rolled back whole.
 * Previews are debounced, at most one render job is in flight, and a
 * completed image is dropped if a newer one was already shown.
 */
export class EditorSession {
  readonly api: ApiClient;
  readonly scene: SceneInfo;
  script: ScriptModel;
  camera: CameraSpec;
  frame = 0;

  lastImage: PreviewImage | null = null;
  lastError: string | null = null;
  lastViolations: string[] = [];

  private seq = 0;
  private shownSeq = 0;
  private inFlight = false;
  private queuedWhileBusy = false;
  private active = 0;
  private cancelDebounce: (() => void) | null = null;
  private readonly debounceMs: number;
  private readonly seed: number;
  private readonly resolution?: [number, number];
  private readonly scheduler: Scheduler;
  private readonly onFrame?: (img: PreviewImage) => void;
  private readonly onError?: (message: string) => void;

  constructor(api: ApiClient, scene: SceneInfo, opts: SessionOptions = {}) {
    this.api = api;
    this.scene = scene;
    this.script = new ScriptModel(scene.n_t);
    this.camera = { camera: scene.cameras[0]?.id ?? 0 };
    this.debounceMs = opts.debounceMs ?? 150;
    this.seed = opts.seed ?? 0;
    this.resolution = opts.resolution;
    this.scheduler = opts.scheduler ?? defaultScheduler;
    this.onFrame = opts.onFrame;
    this.onError = opts.onError;
  }

  /**
   * Apply one desugared gesture to the working script.  The service
   * re-validates the result; violations roll the script back and are
   * returned for inline display.
   */
  async gesture(mutate: (s: ScriptModel) => void): Promise<string[]> {
    const snapshot = this.script.clone();
    mutate(this.script);
    let violations: string[];
    try {
      violations = await this.api.validate(this.script.toJson());
    } catch (e) {
      this.script = snapshot;
      throw e;
    }
    if (violations.length > 0) {
      this.script = snapshot;
      this.lastViolations = violations;
      return violations;
    }
    this.lastViolations = [];
    this.markDirty();
    return [];
  }

  setFrame(frame: number): void {
    this.frame = Math.min(Math.max(frame, 0), this.script.outputFrames - 1);
    this.markDirty();
  }

  setCamera(camera: CameraSpec): void {
    this.camera = camera;
    this.markDirty();
  }

  /** Schedule a preview render after the debounce window. */
  markDirty(): void {
    this.cancelDebounce?.();
    this.cancelDebounce = this.scheduler(() => {
      this.cancelDebounce = null;
      void this.runFire();
    }, this.debounceMs);
  }

  private async runFire(): Promise<void> {
    this.active += 1;
    try {
      await this.firePreview();
    } finally {
      this.active -= 1;
    }
  }

  /** Resolves once every scheduled or in-flight preview has finished. */
  async idle(): Promise<void> {
    for (;;) {
      if (this.active === 0 && this.cancelDebounce === null
          && !this.inFlight && !this.queuedWhileBusy) return;
      await new Promise((r) => setTimeout(r, 2));
    }
  }

  private renderEdits(): LayerEditJson[] {
    return this.script.toJson().edits;
  }

  /** Run one preview job; coalesce requests that arrive while busy. */
  async firePreview(): Promise<void> {
    if (this.inFlight) {
      this.queuedWhileBusy = true;
      return;
    }
    this.inFlight = true;
    const mySeq = ++this.seq;
    const frame = this.frame;
    try {
      const jobId = await this.api.requestRender({
        frame,
        quality: "preview",
        camera: this.camera,
        edits: this.renderEdits(),
        ...(this.resolution ? { resolution: this.resolution } : {}),
        seed: this.seed,
      });
      const info = await this.api.pollJob(jobId);
      if (!info.result) throw new Error(`job ${info.id} finished without image`);
      const bytes = await this.api.fetchImage(info.result);
      if (mySeq > this.shownSeq) {
        this.shownSeq = mySeq;
        this.lastImage = { seq: mySeq, frame, bytes };
        this.lastError = null;
        this.onFrame?.(this.lastImage);
      }
    } catch (e) {
      // non-modal: keep the last good frame on screen
      this.lastError = e instanceof ValidationError
        ? e.violations.join("; ")
        : e instanceof Error ? e.message : String(e);
      this.onError?.(this.lastError);
    } finally {
      this.inFlight = false;
      if (this.queuedWhileBusy) {
        this.queuedWhileBusy = false;
        void this.runFire(); // exactly one follow-up for the whole backlog
      }
    }
  }

  /** Canonical script text; re-importable by the offline renderer. */
  exportScript(): string {
    return exportScript(this.script);
  }
}
