import type {
  EditScriptJson,
  JobInfo,
  LayerInfo,
  RenderRequest,
  SceneInfo,
} from "./types.js";

export class ValidationError extends Error {
  constructor(public violations: string[]) {
    super(violations.join("; "));
    this.name = "ValidationError";
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

/** Thin typed client over the preview service HTTP API. */
export class ApiClient {
  private base: string;
  private fetchFn: FetchLike;

  constructor(baseUrl: string, fetchFn?: FetchLike) {
    this.base = baseUrl.replace(/\/+$/, "");
    this.fetchFn = fetchFn ?? ((url, init) => fetch(url, init));
  }

  private async getJson<T>(path: string): Promise<T> {
    const res = await this.fetchFn(this.base + path);
    if (!res.ok) throw new Error(`GET ${path}: ${res.status}`);
    return (await res.json()) as T;
  }

  getScene(): Promise<SceneInfo> {
    return this.getJson<SceneInfo>("/scene");
  }

  getLayer(id: number): Promise<LayerInfo> {
    return this.getJson<LayerInfo>(`/layers/${id}`);
  }

  /** Returns the violation list (empty when the script is acceptable). */
  async validate(script: Partial<EditScriptJson>): Promise<string[]> {
    const res = await this.fetchFn(this.base + "/validate", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(script),
    });
    if (!res.ok) throw new Error(`POST /validate: ${res.status}`);
    const body = (await res.json()) as { violations: string[] };
    return body.violations;
  }

  /** Queue a render; resolves to the job id. 400s surface as ValidationError. */
  async requestRender(req: RenderRequest): Promise<string> {
    const res = await this.fetchFn(this.base + "/render", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(req),
    });
    if (res.status === 400) {
      const body = (await res.json()) as { violations: string[] };
      throw new ValidationError(body.violations);
    }
    if (!res.ok) throw new Error(`POST /render: ${res.status}`);
    const body = (await res.json()) as { job: string };
    return body.job;
  }

  getJob(id: string): Promise<JobInfo> {
    return this.getJson<JobInfo>(`/jobs/${id}`);
  }

  /** Poll a job until it settles. Rejects on failed jobs and timeouts. */
  async pollJob(
    id: string,
    options?: { intervalMs?: number; timeoutMs?: number; signal?: AbortSignal },
  ): Promise<JobInfo> {
    const intervalMs = options?.intervalMs ?? 150;
    const timeoutMs = options?.timeoutMs ?? 120_000;
    const start = Date.now();
    for (;;) {
      if (options?.signal?.aborted) throw new Error("poll aborted");
      const job = await this.getJob(id);
      if (job.state === "done") return job;
      if (job.state === "failed") throw new Error(job.error ?? "render failed");
      if (Date.now() - start >= timeoutMs) throw new Error("render timed out");
      await new Promise((r) => setTimeout(r, intervalMs));
    }
  }

  /** Fetch a finished render as raw PNG bytes. */
  async fetchImage(path: string): Promise<Uint8Array> {
    const res = await this.fetchFn(this.base + path);
    if (!res.ok) throw new Error(`GET ${path}: ${res.status}`);
    return new Uint8Array(await res.arrayBuffer());
  }
}
