import type { AffineJson, EditScriptJson, LayerEditJson } from "./types.js";

export type Vec3 = [number, number, number];

// ----------------------------------------------------------- mat3 helpers

export const IDENTITY3: number[] = [1, 0, 0, 0, 1, 0, 0, 0, 1];

export function matMul(a: number[], b: number[]): number[] {
  const out = new Array<number>(9).fill(0);
  for (let r = 0; r < 3; r++)
    for (let c = 0; c < 3; c++) {
      let s = 0;
      for (let k = 0; k < 3; k++) s += a[r * 3 + k] * b[k * 3 + c];
      out[r * 3 + c] = s;
    }
  return out;
}

export function matVec(a: number[], v: Vec3): Vec3 {
  return [
    a[0] * v[0] + a[1] * v[1] + a[2] * v[2],
    a[3] * v[0] + a[4] * v[1] + a[5] * v[2],
    a[6] * v[0] + a[7] * v[1] + a[8] * v[2],
  ];
}

export function rotationMatrix(axis: Vec3, degrees: number): number[] {
  const n = Math.hypot(axis[0], axis[1], axis[2]);
  if (n === 0) throw new Error("rotation axis must be nonzero");
  const [x, y, z] = [axis[0] / n, axis[1] / n, axis[2] / n];
  const a = (degrees * Math.PI) / 180;
  const c = Math.cos(a);
  const s = Math.sin(a);
  const t = 1 - c;
  return [
    t * x * x + c, t * x * y - s * z, t * x * z + s * y,
    t * x * y + s * z, t * y * y + c, t * y * z - s * x,
    t * x * z - s * y, t * y * z + s * x, t * z * z + c,
  ];
}

// ------------------------------------------------------- affine gestures

export function translationAffine(delta: Vec3): AffineJson {
  return { linear: [...IDENTITY3], translation: [...delta] };
}

export function scaleAboutAffine(factors: Vec3, pivot: Vec3): AffineJson {
  const lin = [factors[0], 0, 0, 0, factors[1], 0, 0, 0, factors[2]];
  const lp = matVec(lin, pivot);
  return { linear: lin, translation: [pivot[0] - lp[0], pivot[1] - lp[1], pivot[2] - lp[2]] };
}

export function rotationAboutAffine(axis: Vec3, degrees: number, pivot: Vec3): AffineJson {
  const lin = rotationMatrix(axis, degrees);
  const lp = matVec(lin, pivot);
  return { linear: lin, translation: [pivot[0] - lp[0], pivot[1] - lp[1], pivot[2] - lp[2]] };
}

/** outer after inner: x -> Lo (Li x + ti) + to */
export function composeAffine(outer: AffineJson, inner: AffineJson): AffineJson {
  const lin = matMul(outer.linear, inner.linear);
  const t = matVec(outer.linear, inner.translation as Vec3);
  return {
    linear: lin,
    translation: [
      t[0] + outer.translation[0],
      t[1] + outer.translation[1],
      t[2] + outer.translation[2],
    ],
  };
}

// ------------------------------------------------------------ retiming

/** Round half to even, matching the service's frame snapping. */
export function rint(x: number): number {
  const f = Math.floor(x);
  const d = x - f;
  if (d > 0.5) return f + 1;
  if (d < 0.5) return f;
  return f % 2 === 0 ? f : f + 1;
}

/** Linear interpolation over (tOut, tIn) keys, ends clamped. */
export function evalRetime(rawKeys: [number, number][], tOut: number): number {
  const keys = [...rawKeys].sort((a, b) => a[0] - b[0] || a[1] - b[1]);
  if (keys.length === 0) return tOut;
  if (tOut <= keys[0][0]) return keys[0][1];
  const last = keys[keys.length - 1];
  if (tOut >= last[0]) return last[1];
  for (let i = 1; i < keys.length; i++) {
    const [x0, y0] = keys[i - 1];
    const [x1, y1] = keys[i];
    if (tOut <= x1) {
      if (x1 === x0) return y1;
      return y0 + ((tOut - x0) / (x1 - x0)) * (y1 - y0);
    }
  }
  return last[1];
}

/** Source frame for an output frame: interpolate, snap, clamp into the clip. */
export function retimeFrame(keys: [number, number][], tOut: number, nT: number): number {
  const v = rint(evalRetime(keys, tOut));
  return Math.min(Math.max(v, 0), nT - 1);
}

// ------------------------------------------------------------ the model

function canonicalEdit(e: LayerEditJson): LayerEditJson {
  // field order is part of the export format; rebuild every edit in it
  const out: LayerEditJson = { entity: e.entity, visible: e.visible };
  if (e.frames !== undefined) out.frames = [e.frames[0], e.frames[1]];
  if (e.affine !== undefined)
    out.affine = { linear: [...e.affine.linear], translation: [...e.affine.translation] };
  if (e.retime !== undefined)
    out.retime = { keys: e.retime.keys.map(([a, b]) => [a, b] as [number, number]) };
  if (e.transparency !== undefined) out.transparency = e.transparency;
  if (e.duplicate_of !== undefined) out.duplicate_of = e.duplicate_of;
  return out;
}

/**
 * Working edit script: one entry per edited layer, duplicates appended.
 * Every mutator desugars a user gesture into plain script fields.
 */
export class ScriptModel {
  outputFrames: number;
  cameraPath: unknown[] | null = null;
  edits: LayerEditJson[] = [];

  constructor(outputFrames: number) {
    this.outputFrames = outputFrames;
  }

  private editFor(entity: number): LayerEditJson {
    let e = this.edits.find((x) => x.entity === entity);
    if (!e) {
      e = { entity, visible: true };
      this.edits.push(e);
    }
    return e;
  }

  /** Later gestures act outermost, matching stacked-edit composition. */
  applyAffine(entity: number, affine: AffineJson): void {
    const e = this.editFor(entity);
    e.affine = e.affine ? composeAffine(affine, e.affine) : affine;
  }

  translate(entity: number, delta: Vec3): void {
    this.applyAffine(entity, translationAffine(delta));
  }

  scaleAbout(entity: number, factors: Vec3, pivot: Vec3): void {
    this.applyAffine(entity, scaleAboutAffine(factors, pivot));
  }

  rotateAbout(entity: number, axis: Vec3, degrees: number, pivot: Vec3): void {
    this.applyAffine(entity, rotationAboutAffine(axis, degrees, pivot));
  }

  setTransparency(entity: number, s: number): void {
    this.editFor(entity).transparency = s;
  }

  setVisible(entity: number, visible: boolean): void {
    this.editFor(entity).visible = visible;
  }

  setFrameRange(entity: number, range: [number, number] | undefined): void {
    const e = this.editFor(entity);
    if (range === undefined) delete e.frames;
    else e.frames = range;
  }

  /** New layer that replays `source` (with its own further edits). */
  duplicate(source: number, newId: number): void {
    if (this.edits.some((x) => x.entity === newId))
      throw new Error(`layer ${newId} already edited`);
    this.edits.push({ entity: newId, visible: true, duplicate_of: source });
  }

  setRetimeKey(entity: number, tOut: number, tIn: number): void {
    const e = this.editFor(entity);
    const keys = e.retime?.keys ?? [];
    const kept = keys.filter(([a]) => a !== tOut);
    kept.push([tOut, tIn]);
    kept.sort((a, b) => a[0] - b[0]);
    e.retime = { keys: kept };
  }

  removeRetimeKey(entity: number, tOut: number): void {
    const e = this.editFor(entity);
    if (!e.retime) return;
    const kept = e.retime.keys.filter(([a]) => a !== tOut);
    if (kept.length === 0) delete e.retime;
    else e.retime = { keys: kept };
  }

  /** Pin a layer to one source frame for the whole output clip. */
  freezeRetime(entity: number, frame: number): void {
    const e = this.editFor(entity);
    e.retime = { keys: [[0, frame], [Math.max(this.outputFrames - 1, 1), frame]] };
  }

  retimeKeys(entity: number): [number, number][] {
    const e = this.edits.find((x) => x.entity === entity);
    return e?.retime ? e.retime.keys.map(([a, b]) => [a, b] as [number, number]) : [];
  }

  toJson(): EditScriptJson {
    return {
      version: 1,
      output_frames: this.outputFrames,
      camera_path: this.cameraPath,
      edits: this.edits.map(canonicalEdit),
    };
  }

  static fromJson(d: EditScriptJson): ScriptModel {
    const m = new ScriptModel(d.output_frames);
    m.cameraPath = d.camera_path ?? null;
    m.edits = (d.edits ?? []).map(canonicalEdit);
    return m;
  }

  clone(): ScriptModel {
    return ScriptModel.fromJson(this.toJson());
  }
}

/** Canonical export form; export -> import -> export is byte-stable. */
export function exportScript(model: ScriptModel): string {
  return JSON.stringify(model.toJson(), null, 1);
}

export function importScript(text: string): ScriptModel {
  const d = JSON.parse(text) as EditScriptJson;
  if (typeof d.output_frames !== "number")
    throw new Error("script needs integer output_frames");
  return ScriptModel.fromJson(d);
}
