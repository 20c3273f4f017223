import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync, readdirSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { fileURLToPath } from "node:url";
import { ApiClient } from "../src/api.js";
import { EditorSession } from "../src/session.js";
import { ViewCamera } from "../src/viewport.js";
import { exportScript, importScript, type Vec3 } from "../src/script.js";
import type { SceneInfo } from "../src/types.js";

/**
 * End-to-end loop against the real service: scripted drag-translate,
 * transparency, and freeze-retime gestures; preview images over HTTP;
 * then the exported script and an equivalent hand-written one rendered
 * through the offline CLI must match byte for byte.
 *
 * Uses the trained checkpoint named by LAYERFIELD_DESK_CKPT when set
 * (with LAYERFIELD_DESK_DATA for its dataset); otherwise trains a tiny
 * scene variant first so the suite is self-contained.
 */

const PY = process.env.LAYERFIELD_PY ?? "python3";
const CLI = ["-m", "layerfield.cli"];
const HERE = fileURLToPath(new URL(".", import.meta.url));
const REPO = join(HERE, "..", "..");

let tmp: string;
let dsDir: string;
let ckpt: string;
let server: ChildProcess | null = null;
let base = "";

function run(args: string[], timeoutMs = 240_000): void {
  const r = spawnSync(PY, [...CLI, ...args], {
    cwd: REPO, encoding: "utf8", timeout: timeoutMs,
    env: { ...process.env, PYTHONPATH: join(REPO, "src") },
  });
  if (r.status !== 0)
    throw new Error(`cli ${args[0]} failed:\n${r.stdout}\n${r.stderr}`);
}

async function startServer(): Promise<string> {
  const child = spawn(PY, [...CLI, "serve", "--checkpoint", ckpt,
    "--bind", "127.0.0.1:0", "--dataset", dsDir], {
    cwd: REPO,
    env: { ...process.env, PYTHONPATH: join(REPO, "src") },
  });
  server = child;
  let buf = "";
  return await new Promise<string>((resolve, reject) => {
    const to = setTimeout(() => reject(new Error(`service never came up:\n${buf}`)), 120_000);
    child.stdout!.on("data", (d: Buffer) => {
      buf += d.toString();
      const m = buf.match(/serving on (http:\/\/[\d.]+:\d+)/);
      if (m) {
        clearTimeout(to);
        resolve(m[1]);
      }
    });
    child.stderr!.on("data", (d: Buffer) => {
      buf += d.toString();
    });
    child.on("exit", (code) => reject(new Error(`service exited ${code}:\n${buf}`)));
  });
}

beforeAll(async () => {
  tmp = mkdtempSync(join(tmpdir(), "editor-e2e-"));
  if (process.env.LAYERFIELD_DESK_CKPT) {
    ckpt = process.env.LAYERFIELD_DESK_CKPT;
    dsDir = process.env.LAYERFIELD_DESK_DATA ?? join(tmp, "ds");
    if (!process.env.LAYERFIELD_DESK_DATA)
      run(["synthesize", "--scene", "desk", "--out", dsDir]);
  } else {
    dsDir = join(tmp, "ds");
    ckpt = join(tmp, "model.ckpt");
    run(["synthesize", "--scene", "desk", "--out", dsDir,
      "--cams", "2", "--frames", "3", "--size", "24"]);
    const cfg = join(tmp, "cfg.json");
    writeFileSync(cfg, JSON.stringify({
      train: { rays_per_batch: 256, steps_per_epoch: 4 },
      render: { coarse_samples: 8, fine_samples: 8 },
    }));
    run(["train", "--dataset", dsDir, "--out", ckpt,
      "--config", cfg, "--epochs", "1", "--seed", "0"]);
  }
  base = await startServer();
}, 600_000);

afterAll(() => {
  server?.kill("SIGINT");
  rmSync(tmp, { recursive: true, force: true });
});

describe("editor loop against the live service", () => {
  it("gestures, previews, and byte-identical offline renders", async () => {
    const api = new ApiClient(base);
    const scene: SceneInfo = await api.getScene();
    expect(scene.entities.length).toBeGreaterThanOrEqual(3);

    const session = new EditorSession(api, scene, { debounceMs: 10, seed: 0 });

    // -- drag-translate entity 1 in two strokes from camera 0's view
    const cam = ViewCamera.fromInfo(scene.cameras[0]);
    const track = scene.boxes["1"];
    const center: Vec3 = [
      (track[0][0][0] + track[0][1][0]) / 2,
      (track[0][0][1] + track[0][1][1]) / 2,
      (track[0][0][2] + track[0][1][2]) / 2,
    ];
    const [, , depth] = cam.project(center);
    expect(depth).toBeGreaterThan(0);
    const d1 = cam.dragDelta(5, 3, depth);
    const d2 = cam.dragDelta(-2, 1, depth);
    expect(await session.gesture((s) => s.translate(1, d1))).toEqual([]);
    expect(await session.gesture((s) => s.translate(1, d2))).toEqual([]);

    // -- transparency on entity 2, freeze entity 1 at source frame 2
    expect(await session.gesture((s) => s.setTransparency(2, 0.5))).toEqual([]);
    expect(await session.gesture((s) => s.freezeRetime(1, 2))).toEqual([]);

    // -- a bad gesture is rejected by the live validator and rolled back
    const before = session.exportScript();
    const bad = await session.gesture((s) => s.scaleAbout(2, [0, 0, 0], [0, 0, 0]));
    expect(bad.length).toBeGreaterThan(0);
    expect(bad.join(" ")).toMatch(/affine/);
    expect(session.exportScript()).toBe(before);

    // -- preview images arrived over HTTP
    await session.idle();
    expect(session.lastError).toBeNull();
    expect(session.lastImage).not.toBeNull();
    const png = session.lastImage!.bytes;
    expect([...png.slice(0, 8)]).toEqual([137, 80, 78, 71, 13, 10, 26, 10]);

    // -- exported script: import/export byte-stable, then offline parity
    const exported = session.exportScript();
    expect(exportScript(importScript(exported))).toBe(exported);
    const uiScript = join(tmp, "ui_script.json");
    writeFileSync(uiScript, exported);

    // the same composition written down directly
    const equivalent = {
      version: 1,
      output_frames: scene.n_t,
      camera_path: null,
      edits: [
        {
          entity: 1,
          visible: true,
          affine: {
            linear: [1, 0, 0, 0, 1, 0, 0, 0, 1],
            translation: [d1[0] + d2[0], d1[1] + d2[1], d1[2] + d2[2]],
          },
          retime: { keys: [[0, 2], [scene.n_t - 1, 2]] },
        },
        { entity: 2, visible: true, transparency: 0.5 },
      ],
    };
    const directScript = join(tmp, "direct_script.json");
    writeFileSync(directScript, JSON.stringify(equivalent, null, 2));

    const outUi = join(tmp, "out_ui");
    const outDirect = join(tmp, "out_direct");
    run(["edit", "--checkpoint", ckpt, "--script", uiScript, "--out", outUi,
      "--dataset", dsDir, "--camera", "0", "--quality", "full", "--seed", "0"]);
    run(["edit", "--checkpoint", ckpt, "--script", directScript, "--out", outDirect,
      "--dataset", dsDir, "--camera", "0", "--quality", "full", "--seed", "0"]);

    const frames = readdirSync(outUi).filter((f) => f.endsWith(".png")).sort();
    expect(frames.length).toBe(scene.n_t);
    for (const f of frames) {
      const a = readFileSync(join(outUi, f));
      const b = readFileSync(join(outDirect, f));
      expect(a.equals(b), `frame ${f} differs`).toBe(true);
    }
  }, 600_000);

  it("stale previews are superseded, newest image wins", async () => {
    const api = new ApiClient(base);
    const scene = await api.getScene();
    const session = new EditorSession(api, scene, { debounceMs: 5, seed: 0 });
    for (let f = 0; f < Math.min(3, scene.n_t); f++) session.setFrame(f);
    await session.idle();
    expect(session.lastImage).not.toBeNull();
    expect(session.lastImage!.frame).toBe(Math.min(3, scene.n_t) - 1);
  });
});
