import type { CameraInfo } from "./types.js";
import type { Vec3 } from "./script.js";

// ------------------------------------------------------------- vectors

function sub(a: Vec3, b: Vec3): Vec3 {
  return [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
}

function cross(a: Vec3, b: Vec3): Vec3 {
  return [
    a[1] * b[2] - a[2] * b[1],
    a[2] * b[0] - a[0] * b[2],
    a[0] * b[1] - a[1] * b[0],
  ];
}

function norm(a: Vec3): number {
  return Math.hypot(a[0], a[1], a[2]);
}

function scale(a: Vec3, s: number): Vec3 {
  return [a[0] * s, a[1] * s, a[2] * s];
}

function dot(a: Vec3, b: Vec3): number {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

/**
 * Camera-to-world rotation looking from position toward target,
 * y-down image convention; matches the renderer's pose construction.
 * Returned flat row-major with basis vectors in the columns.
 */
export function lookAtRotation(position: Vec3, target: Vec3, up: Vec3 = [0, 1, 0]): number[] {
  let fwd = sub(target, position);
  fwd = scale(fwd, 1 / norm(fwd));
  let right = cross(fwd, up);
  let n = norm(right);
  if (n < 1e-9) {
    right = cross(fwd, [0, 0, 1]);
    n = norm(right);
  }
  right = scale(right, 1 / n);
  const down = cross(fwd, right);
  return [
    right[0], down[0], fwd[0],
    right[1], down[1], fwd[1],
    right[2], down[2], fwd[2],
  ];
}

// ------------------------------------------------------------- camera

/** Pose + intrinsics, with the projection used for all overlay drawing. */
export class ViewCamera {
  constructor(
    public position: Vec3,
    public rotation: number[], // flat row-major camera-to-world
    public fx: number,
    public fy: number,
    public cx: number,
    public cy: number,
    public width: number,
    public height: number,
  ) {}

  static fromInfo(info: CameraInfo): ViewCamera {
    return new ViewCamera(
      [info.position[0], info.position[1], info.position[2]],
      [...info.rotation],
      info.fx, info.fy, info.cx, info.cy, info.width, info.height,
    );
  }

  right(): Vec3 {
    return [this.rotation[0], this.rotation[3], this.rotation[6]];
  }

  down(): Vec3 {
    return [this.rotation[1], this.rotation[4], this.rotation[7]];
  }

  forward(): Vec3 {
    return [this.rotation[2], this.rotation[5], this.rotation[8]];
  }

  /** World point to pixel (u, v) and camera-space depth z. */
  project(p: Vec3): [number, number, number] {
    const d = sub(p, this.position);
    const x = dot(d, this.right());
    const y = dot(d, this.down());
    const z = dot(d, this.forward());
    return [(x / z) * this.fx + this.cx, (y / z) * this.fy + this.cy, z];
  }

  /** Camera-space point to world. */
  toWorld(x: number, y: number, z: number): Vec3 {
    const r = this.right();
    const dn = this.down();
    const f = this.forward();
    return [
      this.position[0] + x * r[0] + y * dn[0] + z * f[0],
      this.position[1] + x * r[1] + y * dn[1] + z * f[1],
      this.position[2] + x * r[2] + y * dn[2] + z * f[2],
    ];
  }

  /**
   * World-space translation for a pixel drag at a given grab depth:
   * the grabbed point tracks the cursor on its depth plane.
   */
  dragDelta(du: number, dv: number, depth: number): Vec3 {
    const r = this.right();
    const dn = this.down();
    const sx = (du * depth) / this.fx;
    const sy = (dv * depth) / this.fy;
    return [
      sx * r[0] + sy * dn[0],
      sx * r[1] + sy * dn[1],
      sx * r[2] + sy * dn[2],
    ];
  }

  /** camera_path / render-request pose entry (intrinsics inherited). */
  poseSpec(): { position: number[]; rotation: number[] } {
    return { position: [...this.position], rotation: [...this.rotation] };
  }
}

// ------------------------------------------------------------- orbit

export interface OrbitParams {
  target: Vec3;
  radius: number;
  azimuth: number; // radians around the y axis
  elevation: number; // radians above the horizon
}

const MAX_ELEVATION = Math.PI / 2 - 0.05;

export function orbitPosition(o: OrbitParams): Vec3 {
  const c = Math.cos(o.elevation);
  return [
    o.target[0] + o.radius * c * Math.cos(o.azimuth),
    o.target[1] + o.radius * Math.sin(o.elevation),
    o.target[2] + o.radius * c * Math.sin(o.azimuth),
  ];
}

export function orbitCamera(o: OrbitParams, like: CameraInfo): ViewCamera {
  const pos = orbitPosition(o);
  return new ViewCamera(
    pos, lookAtRotation(pos, o.target),
    like.fx, like.fy, like.cx, like.cy, like.width, like.height,
  );
}

export function orbitBy(o: OrbitParams, dAz: number, dEl: number): OrbitParams {
  const el = Math.min(Math.max(o.elevation + dEl, -MAX_ELEVATION), MAX_ELEVATION);
  return { ...o, azimuth: o.azimuth + dAz, elevation: el };
}

export function zoomBy(o: OrbitParams, factor: number): OrbitParams {
  return { ...o, radius: Math.max(o.radius * factor, 0.05) };
}

/** Orbit that frames a set of layer boxes: target at the joint center. */
export function orbitFromBoxes(boxes: number[][][], like: CameraInfo): OrbitParams {
  let mn: Vec3 = [Infinity, Infinity, Infinity];
  let mx: Vec3 = [-Infinity, -Infinity, -Infinity];
  for (const box of boxes)
    for (let k = 0; k < 3; k++) {
      mn[k] = Math.min(mn[k], box[0][k]);
      mx[k] = Math.max(mx[k], box[1][k]);
    }
  const target: Vec3 = [(mn[0] + mx[0]) / 2, (mn[1] + mx[1]) / 2, (mn[2] + mx[2]) / 2];
  const span = norm(sub(mx, mn)) || 1;
  const d = norm(sub(target, like.position as Vec3)) || 2 * span;
  return { target, radius: d, azimuth: Math.PI / 4, elevation: 0.4 };
}

// ------------------------------------------------------------- drawing

/** The 2D-context subset the overlay uses; tests inject a recorder. */
export interface LineSurface {
  strokeStyle: string | unknown;
  lineWidth: number;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  stroke(): void;
}

export interface ViewportState {
  orbit: OrbitParams | null; // null: locked to a dataset camera
  cameraId: number;
  showWireframes: boolean;
  showFrusta: boolean;
  showAlphaHeatmap: boolean;
  selectedLayer: number | null;
}

export function initialViewportState(cameraId: number): ViewportState {
  return {
    orbit: null,
    cameraId,
    showWireframes: true,
    showFrusta: false,
    showAlphaHeatmap: false,
    selectedLayer: null,
  };
}

const BOX_EDGES: [number, number][] = [
  [0, 1], [0, 2], [1, 3], [2, 3],
  [4, 5], [4, 6], [5, 7], [6, 7],
  [0, 4], [1, 5], [2, 6], [3, 7],
];

export function boxCorners(box: number[][]): Vec3[] {
  const [mn, mx] = box;
  const out: Vec3[] = [];
  for (let i = 0; i < 8; i++)
    out.push([
      i & 1 ? mx[0] : mn[0],
      i & 2 ? mx[1] : mn[1],
      i & 4 ? mx[2] : mn[2],
    ]);
  return out;
}

function strokeSegment(ctx: LineSurface, cam: ViewCamera, a: Vec3, b: Vec3): boolean {
  const [ua, va, za] = cam.project(a);
  const [ub, vb, zb] = cam.project(b);
  if (za <= 1e-6 || zb <= 1e-6) return false; // behind the eye, drop whole edge
  ctx.beginPath();
  ctx.moveTo(ua, va);
  ctx.lineTo(ub, vb);
  ctx.stroke();
  return true;
}

export function drawBoxWireframe(
  ctx: LineSurface, cam: ViewCamera, box: number[][], selected: boolean,
): void {
  ctx.strokeStyle = selected ? "#ffb347" : "#5dd2ff";
  ctx.lineWidth = selected ? 2 : 1;
  const corners = boxCorners(box);
  for (const [i, j] of BOX_EDGES) strokeSegment(ctx, cam, corners[i], corners[j]);
}

export function drawCameraFrustum(
  ctx: LineSurface, cam: ViewCamera, other: CameraInfo, depth: number,
): void {
  ctx.strokeStyle = "#8f8f8f";
  ctx.lineWidth = 1;
  const oc = ViewCamera.fromInfo(other);
  const px: [number, number][] = [
    [0, 0], [other.width, 0], [other.width, other.height], [0, other.height],
  ];
  const corners = px.map(([u, v]) =>
    oc.toWorld(((u - other.cx) / other.fx) * depth, ((v - other.cy) / other.fy) * depth, depth));
  for (let i = 0; i < 4; i++) {
    strokeSegment(ctx, cam, oc.position, corners[i]);
    strokeSegment(ctx, cam, corners[i], corners[(i + 1) % 4]);
  }
}

/**
 * Draw every locally-rendered overlay: wireframe boxes for each layer
 * at its evaluated source frame, plus dataset camera frusta.  Shaded
 * content always comes from service previews, never from here.
 */
export function drawOverlays(
  ctx: LineSurface,
  cam: ViewCamera,
  state: ViewportState,
  boxesAtFrame: Map<number, number[][]>,
  cameras: CameraInfo[],
): void {
  if (state.showWireframes)
    for (const [entity, box] of boxesAtFrame)
      drawBoxWireframe(ctx, cam, box, entity === state.selectedLayer);
  if (state.showFrusta)
    for (const info of cameras) drawCameraFrustum(ctx, cam, info, 0.25);
}

/** Luma-ramp recolor used by the alpha-heatmap toggle (in place). */
export function heatmapRGBA(rgba: Uint8ClampedArray): void {
  for (let i = 0; i < rgba.length; i += 4) {
    const y = 0.2126 * rgba[i] + 0.7152 * rgba[i + 1] + 0.0722 * rgba[i + 2];
    const t = y / 255;
    rgba[i] = Math.round(255 * Math.min(1, 2 * t));
    rgba[i + 1] = Math.round(255 * Math.max(0, Math.min(1, 2 * t - 0.5)));
    rgba[i + 2] = Math.round(255 * Math.max(0, 1 - 2 * t));
  }
}
