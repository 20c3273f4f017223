import { ApiClient } from "./api.js";
import { EditorSession } from "./session.js";
import { exportScript } from "./script.js";
import {
  ViewCamera, type ViewportState, initialViewportState,
  orbitCamera, orbitBy, zoomBy, orbitFromBoxes, drawOverlays, heatmapRGBA,
} from "./viewport.js";
import { composeLayerStates, overlayCorners, cornersToAabb } from "./timeline.js";
import type { CameraInfo, SceneInfo } from "./types.js";

function el<T extends HTMLElement>(id: string): T {
  const e = document.getElementById(id);
  if (!e) throw new Error(`missing #${id}`);
  return e as T;
}

function activeCamera(scene: SceneInfo, state: ViewportState): ViewCamera {
  const like = scene.cameras.find((c) => c.id === state.cameraId) ?? scene.cameras[0];
  if (state.orbit) return orbitCamera(state.orbit, like);
  return ViewCamera.fromInfo(like);
}

function boxesForOverlay(scene: SceneInfo, session: EditorSession, tOut: number) {
  const states = composeLayerStates(
    scene.entities, session.script.toJson().edits, tOut,
    session.script.outputFrames, scene.n_t,
  );
  return overlayCorners(scene.boxes, states);
}

async function boot(): Promise<void> {
  const params = new URLSearchParams(location.search);
  const base = params.get("api") ?? "";
  const api = new ApiClient(base || location.origin);
  const scene = await api.getScene();

  const canvas = el<HTMLCanvasElement>("preview");
  const overlay = el<HTMLCanvasElement>("overlay");
  const status = el<HTMLDivElement>("status");
  const like = scene.cameras[0];
  for (const c of [canvas, overlay]) {
    c.width = like.width;
    c.height = like.height;
  }

  const state = initialViewportState(like.id);
  const session = new EditorSession(api, scene, {
    onFrame: (img) => showPreview(img.bytes),
    onError: (msg) => {
      status.textContent = `render failed: ${msg}`;
      status.classList.add("error"); // last good frame stays up
    },
  });

  function showPreview(bytes: Uint8Array): void {
    const url = URL.createObjectURL(new Blob([bytes.buffer as ArrayBuffer], { type: "image/png" }));
    const img = new Image();
    img.onload = () => {
      const ctx = canvas.getContext("2d")!;
      ctx.imageSmoothingEnabled = false;
      ctx.drawImage(img, 0, 0, canvas.width, canvas.height);
      if (state.showAlphaHeatmap) {
        const px = ctx.getImageData(0, 0, canvas.width, canvas.height);
        heatmapRGBA(px.data);
        ctx.putImageData(px, 0, 0);
      }
      URL.revokeObjectURL(url);
      status.textContent = `frame ${session.frame}`;
      status.classList.remove("error");
      redrawOverlay();
    };
    img.src = url;
  }

  function redrawOverlay(): void {
    const ctx = overlay.getContext("2d")!;
    ctx.clearRect(0, 0, overlay.width, overlay.height);
    const cam = activeCamera(scene, state);
    const corners = boxesForOverlay(scene, session, session.frame);
    const asBoxes = new Map<number, number[][]>();
    for (const [ent, cs] of corners) asBoxes.set(ent, cornersToAabb(cs));
    drawOverlays(ctx, cam, state, asBoxes, scene.cameras);
  }

  function syncViewCamera(): void {
    const cam = activeCamera(scene, state);
    session.setCamera(state.orbit ? cam.poseSpec() as unknown as CameraInfo : { camera: state.cameraId });
    redrawOverlay();
  }

  // ---- layer list + per-layer controls
  const layerList = el<HTMLSelectElement>("layers");
  for (const ent of scene.entities) {
    const o = document.createElement("option");
    o.value = String(ent);
    o.textContent = `layer ${ent}`;
    layerList.appendChild(o);
  }
  layerList.onchange = () => {
    state.selectedLayer = Number(layerList.value);
    redrawOverlay();
  };
  state.selectedLayer = scene.entities[0] ?? null;

  el<HTMLInputElement>("transparency").oninput = async (ev) => {
    if (state.selectedLayer === null) return;
    const s = Number((ev.target as HTMLInputElement).value);
    const bad = await session.gesture((sc) => sc.setTransparency(state.selectedLayer!, s));
    report(bad);
  };

  el<HTMLButtonElement>("freeze").onclick = async () => {
    if (state.selectedLayer === null) return;
    const bad = await session.gesture((sc) => sc.freezeRetime(state.selectedLayer!, session.frame));
    report(bad);
  };

  el<HTMLButtonElement>("duplicate").onclick = async () => {
    if (state.selectedLayer === null) return;
    const newId = Math.max(...scene.entities, ...session.script.edits.map((e) => e.entity)) + 1;
    const src = state.selectedLayer;
    const bad = await session.gesture((sc) => {
      sc.duplicate(src, newId);
      sc.translate(newId, [0.25, 0, 0]);
    });
    report(bad);
  };

  el<HTMLButtonElement>("hide").onclick = async () => {
    if (state.selectedLayer === null) return;
    const ent = state.selectedLayer;
    const vis = session.script.edits.find((e) => e.entity === ent)?.visible ?? true;
    report(await session.gesture((sc) => sc.setVisible(ent, !vis)));
  };

  function report(violations: string[]): void {
    if (violations.length > 0) {
      status.textContent = violations.join("; ");
      status.classList.add("error");
    } else {
      status.classList.remove("error");
      redrawOverlay();
    }
  }

  // ---- timeline scrubber
  const scrub = el<HTMLInputElement>("frame");
  scrub.max = String(scene.n_t - 1);
  scrub.oninput = () => {
    session.setFrame(Number(scrub.value));
    redrawOverlay();
  };

  // ---- pointer: left-drag moves the selected layer, wheel zooms,
  //      shift-drag orbits a free camera
  let dragging: { u: number; v: number; depth: number } | null = null;
  overlay.onpointerdown = (ev) => {
    overlay.setPointerCapture(ev.pointerId);
    if (ev.shiftKey || state.selectedLayer === null) {
      if (!state.orbit) {
        const all = scene.entities.map((e) => {
          const cs = boxesForOverlay(scene, session, session.frame).get(e);
          return cs ? cornersToAabb(cs) : scene.boxes[String(e)][0];
        });
        state.orbit = orbitFromBoxes(all, like);
      }
      dragging = { u: ev.offsetX, v: ev.offsetY, depth: -1 };
      return;
    }
    const cam = activeCamera(scene, state);
    const corners = boxesForOverlay(scene, session, session.frame).get(state.selectedLayer);
    if (!corners) return;
    const box = cornersToAabb(corners);
    const center: [number, number, number] = [
      (box[0][0] + box[1][0]) / 2, (box[0][1] + box[1][1]) / 2, (box[0][2] + box[1][2]) / 2,
    ];
    const [, , z] = cam.project(center);
    dragging = { u: ev.offsetX, v: ev.offsetY, depth: z };
  };
  overlay.onpointermove = async (ev) => {
    if (!dragging) return;
    const du = ev.offsetX - dragging.u;
    const dv = ev.offsetY - dragging.v;
    if (dragging.depth < 0) {
      state.orbit = orbitBy(state.orbit!, du * 0.01, -dv * 0.01);
      dragging.u = ev.offsetX;
      dragging.v = ev.offsetY;
      syncViewCamera();
      return;
    }
    if (Math.abs(du) + Math.abs(dv) < 3) return;
    const cam = activeCamera(scene, state);
    const delta = cam.dragDelta(du, dv, dragging.depth);
    dragging.u = ev.offsetX;
    dragging.v = ev.offsetY;
    report(await session.gesture((sc) => sc.translate(state.selectedLayer!, delta)));
  };
  overlay.onpointerup = () => {
    dragging = null;
  };
  overlay.onwheel = (ev) => {
    if (!state.orbit) return;
    ev.preventDefault();
    state.orbit = zoomBy(state.orbit, ev.deltaY > 0 ? 1.1 : 1 / 1.1);
    syncViewCamera();
  };

  // ---- overlay toggles
  el<HTMLInputElement>("wireframes").onchange = (ev) => {
    state.showWireframes = (ev.target as HTMLInputElement).checked;
    redrawOverlay();
  };
  el<HTMLInputElement>("frusta").onchange = (ev) => {
    state.showFrusta = (ev.target as HTMLInputElement).checked;
    redrawOverlay();
  };
  el<HTMLInputElement>("heatmap").onchange = (ev) => {
    state.showAlphaHeatmap = (ev.target as HTMLInputElement).checked;
    session.markDirty();
  };

  // ---- export
  el<HTMLButtonElement>("export").onclick = () => {
    const text = exportScript(session.script);
    const url = URL.createObjectURL(new Blob([text], { type: "application/json" }));
    const a = document.createElement("a");
    a.href = url;
    a.download = "edits.json";
    a.click();
    URL.revokeObjectURL(url);
  };

  session.markDirty(); // first preview
  redrawOverlay();
}

boot().catch((e) => {
  const s = document.getElementById("status");
  if (s) s.textContent = `failed to start: ${e instanceof Error ? e.message : e}`;
});
