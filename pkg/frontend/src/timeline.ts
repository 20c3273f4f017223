import { evalRetime, matMul, matVec, rint, type Vec3 } from "./script.js";
import { boxCorners } from "./viewport.js";
import type { LayerEditJson } from "./types.js";

/**
 * Timeline model: retimes are sparse draggable (tOut, tIn) keyframes,
 * and the box-track preview snaps each output frame to its nearest
 * source frame, exactly as the renderer will.
 */

export interface RetimeKeyDrag {
  index: number;
  tOut: number;
  tIn: number;
}

/**
 * Move one keyframe.  tOut stays strictly between its neighbours so the
 * key order never flips under the cursor; tIn clamps into the clip.
 */
export function dragKeyTo(
  keys: [number, number][], drag: RetimeKeyDrag, nOut: number, nT: number,
): [number, number][] {
  const out = keys.map(([a, b]) => [a, b] as [number, number]);
  const i = drag.index;
  if (i < 0 || i >= out.length) throw new Error(`no retime key ${i}`);
  const lo = i > 0 ? out[i - 1][0] + 1e-6 : 0;
  const hi = i < out.length - 1 ? out[i + 1][0] - 1e-6 : nOut - 1;
  out[i] = [
    Math.min(Math.max(drag.tOut, lo), hi),
    Math.min(Math.max(drag.tIn, 0), nT - 1),
  ];
  return out;
}

/** Source frame per output frame (dense preview track). */
export function retimePreviewTrack(
  keys: [number, number][], nOut: number, nT: number,
): number[] {
  const out: number[] = [];
  for (let t = 0; t < nOut; t++) {
    const v = rint(evalRetime(keys, t));
    out.push(Math.min(Math.max(v, 0), nT - 1));
  }
  return out;
}

// --------------------------------------------- layer state at a frame

export interface LayerState {
  layerId: number;
  source: number;
  tIn: number;
  lin: number[] | null;
  trans: Vec3 | null;
  transparency: number;
}

interface Working {
  source: number;
  lin: number[] | null;
  trans: Vec3 | null;
  s: number;
  visible: boolean;
  chain: [number, number][][];
}

function editActive(e: LayerEditJson, tOut: number): boolean {
  return e.frames === undefined || (e.frames[0] <= tOut && tOut <= e.frames[1]);
}

/**
 * Mirror of the renderer's per-frame layer resolution, kept here so the
 * wireframe overlay and the keyframe track agree with what a preview
 * render will show.  Later affines act outermost; later retimes remap
 * the output frame first; duplicates copy the source's state so far.
 */
export function composeLayerStates(
  entityIds: number[],
  edits: LayerEditJson[],
  tOut: number,
  nOut: number,
  nT: number,
): LayerState[] {
  const states = new Map<number, Working>();
  for (const ent of entityIds)
    states.set(ent, { source: ent, lin: null, trans: null, s: 1, visible: true, chain: [] });

  for (const e of edits) {
    if (!editActive(e, tOut)) continue;
    let st: Working;
    if (e.duplicate_of !== undefined) {
      const src = states.get(e.duplicate_of);
      if (!src) throw new Error(`duplicate source ${e.duplicate_of} unknown`);
      st = {
        source: src.source,
        lin: src.lin ? [...src.lin] : null,
        trans: src.trans ? [...src.trans] as Vec3 : null,
        s: src.s,
        visible: src.visible,
        chain: src.chain.map((k) => k.map(([a, b]) => [a, b] as [number, number])),
      };
      states.set(e.entity, st);
    } else {
      const cur = states.get(e.entity);
      if (!cur) throw new Error(`edit references unknown layer ${e.entity}`);
      st = cur;
    }
    if (e.affine !== undefined) {
      const lin = e.affine.linear;
      const trans = e.affine.translation as Vec3;
      if (st.lin === null) {
        st.lin = [...lin];
        st.trans = [...trans] as Vec3;
      } else {
        const t = matVec(lin, st.trans as Vec3);
        st.lin = matMul(lin, st.lin);
        st.trans = [t[0] + trans[0], t[1] + trans[1], t[2] + trans[2]];
      }
    }
    if (e.retime !== undefined) st.chain.push(e.retime.keys);
    if (e.transparency !== undefined) st.s *= e.transparency;
    st.visible = st.visible && e.visible;
  }

  const out: LayerState[] = [];
  for (const lid of [...states.keys()].sort((a, b) => a - b)) {
    const st = states.get(lid)!;
    if (!st.visible || st.s === 0) continue;
    let tCur = st.chain.length === 0 ? Math.min(tOut, nT - 1) : tOut;
    for (let j = 0; j < st.chain.length; j++) {
      const keys = st.chain[st.chain.length - 1 - j];
      const hi = j === st.chain.length - 1 ? nT - 1 : nOut - 1;
      const v = rint(evalRetime(keys, tCur));
      tCur = Math.min(Math.max(v, 0), hi);
    }
    out.push({
      layerId: lid,
      source: st.source,
      tIn: tCur,
      lin: st.lin,
      trans: st.trans,
      transparency: st.s,
    });
  }
  return out;
}

/** Wireframe corners for each live layer at one output frame. */
export function overlayCorners(
  boxTracks: Record<string, number[][][]>,
  states: LayerState[],
): Map<number, Vec3[]> {
  const out = new Map<number, Vec3[]>();
  for (const st of states) {
    const track = boxTracks[String(st.source)];
    if (!track) continue;
    let corners = boxCorners(track[st.tIn]);
    if (st.lin !== null && st.trans !== null) {
      const { lin, trans } = st;
      corners = corners.map((c) => {
        const m = matVec(lin, c);
        return [m[0] + trans[0], m[1] + trans[1], m[2] + trans[2]] as Vec3;
      });
    }
    out.set(st.layerId, corners);
  }
  return out;
}

/** Axis bounds of transformed corners, for overlays that want an AABB. */
export function cornersToAabb(corners: Vec3[]): number[][] {
  const mn = [Infinity, Infinity, Infinity];
  const mx = [-Infinity, -Infinity, -Infinity];
  for (const c of corners)
    for (let k = 0; k < 3; k++) {
      mn[k] = Math.min(mn[k], c[k]);
      mx[k] = Math.max(mx[k], c[k]);
    }
  return [mn, mx];
}
