import { describe, expect, it } from "vitest";
import {
  composeLayerStates, cornersToAabb, dragKeyTo, overlayCorners,
  retimePreviewTrack,
} from "../src/timeline.js";
import type { LayerEditJson } from "../src/types.js";

describe("retime preview track", () => {
  // oracle: the renderer's dense retime map for the same keys
  it("matches the renderer's frame snapping", () => {
    expect(retimePreviewTrack([[0, 3], [3, 0]], 4, 4)).toEqual([3, 2, 1, 0]);
    expect(retimePreviewTrack([[0, 0], [7, 3.5]], 8, 8)).toEqual([0, 0, 1, 2, 2, 2, 3, 4]);
    expect(retimePreviewTrack([[0, 2], [5, 2]], 6, 8)).toEqual([2, 2, 2, 2, 2, 2]);
  });
});

describe("keyframe dragging", () => {
  const keys: [number, number][] = [[0, 0], [4, 2], [7, 7]];

  it("keeps a key strictly between its neighbours", () => {
    const moved = dragKeyTo(keys, { index: 1, tOut: 9, tIn: 2 }, 8, 8);
    expect(moved[1][0]).toBeLessThan(7);
    expect(moved[1][0]).toBeGreaterThan(4 - 1);
    const back = dragKeyTo(keys, { index: 1, tOut: -5, tIn: 2 }, 8, 8);
    expect(back[1][0]).toBeGreaterThan(0);
  });

  it("clamps the source frame into the clip and edges into the output", () => {
    const moved = dragKeyTo(keys, { index: 2, tOut: 40, tIn: 40 }, 8, 8);
    expect(moved[2]).toEqual([7, 7]);
    const lo = dragKeyTo(keys, { index: 0, tOut: -3, tIn: -3 }, 8, 8);
    expect(lo[0]).toEqual([0, 0]);
  });

  it("does not mutate the input", () => {
    dragKeyTo(keys, { index: 1, tOut: 5, tIn: 5 }, 8, 8);
    expect(keys[1]).toEqual([4, 2]);
  });
});

// mirrors a renderer-side composition oracle: two stacked affines on
// layer 1, a duplicate (3) inheriting them plus its own retime+scale,
// and layer 2 hidden
const N_T = 5;
const EDITS: LayerEditJson[] = [
  { entity: 1, visible: true, affine: { linear: [1, 0, 0, 0, 1, 0, 0, 0, 1], translation: [0.3, 0, -0.2] } },
  {
    entity: 1, visible: true,
    affine: { linear: [0, -1, 0, 1, 0, 0, 0, 0, 1], translation: [0.1, 0.1, 0] },
    retime: { keys: [[0, 4], [4, 0]] },
  },
  { entity: 3, visible: true, transparency: 0.6, duplicate_of: 1 },
  {
    entity: 3, visible: true,
    affine: { linear: [1.5, 0, 0, 0, 1.5, 0, 0, 0, 1.5], translation: [0, 0, 0] },
    retime: { keys: [[0, 1], [4, 3]] },
  },
  { entity: 2, visible: false },
];

const TRACKS: Record<string, number[][][]> = { "0": [], "1": [], "2": [] };
for (let t = 0; t < N_T; t++) {
  TRACKS["0"].push([[-3, -3, -0.5], [3, 3, 0]]);
  TRACKS["1"].push([[-0.6 + 0.1 * t, -0.5, 1], [0.4 + 0.1 * t, 0.5, 2]]);
  TRACKS["2"].push([[0.8, -0.2, 1.5], [1.8, 0.8, 2.5]]);
}

// frozen expectations from the renderer for t_out = 0, 2, 4
const WANT: Record<number, Record<number, { tIn: number; s: number; box: number[][] }>> = {
  0: {
    0: { tIn: 0, s: 1, box: [[-3, -3, -0.5], [3, 3, 0]] },
    1: { tIn: 4, s: 1, box: [[-0.4, 0.2, 0.8], [0.6, 1.2, 1.8]] },
    3: { tIn: 3, s: 0.6, box: [[-0.6, 0.15, 1.2], [0.9, 1.65, 2.7]] },
  },
  2: {
    0: { tIn: 2, s: 1, box: [[-3, -3, -0.5], [3, 3, 0]] },
    1: { tIn: 2, s: 1, box: [[-0.4, 0, 0.8], [0.6, 1, 1.8]] },
    3: { tIn: 2, s: 0.6, box: [[-0.6, 0, 1.2], [0.9, 1.5, 2.7]] },
  },
  4: {
    0: { tIn: 4, s: 1, box: [[-3, -3, -0.5], [3, 3, 0]] },
    1: { tIn: 0, s: 1, box: [[-0.4, -0.2, 0.8], [0.6, 0.8, 1.8]] },
    3: { tIn: 1, s: 0.6, box: [[-0.6, -0.15, 1.2], [0.9, 1.35, 2.7]] },
  },
};

describe("layer states at a frame", () => {
  for (const tOut of [0, 2, 4]) {
    it(`resolves layers at output frame ${tOut} like the renderer`, () => {
      const states = composeLayerStates([0, 1, 2], EDITS, tOut, 5, N_T);
      const want = WANT[tOut];
      expect(states.map((s) => s.layerId)).toEqual([0, 1, 3]); // 2 hidden
      for (const st of states) {
        const w = want[st.layerId];
        expect(st.tIn).toBe(w.tIn);
        expect(st.transparency).toBeCloseTo(w.s, 12);
        const box = cornersToAabb([...overlayCorners(TRACKS, [st]).get(st.layerId)!]);
        for (let i = 0; i < 2; i++)
          for (let k = 0; k < 3; k++) expect(box[i][k]).toBeCloseTo(w.box[i][k], 9);
      }
    });
  }

  it("duplicates of hidden layers stay hidden, zero transparency drops out", () => {
    const edits: LayerEditJson[] = [
      { entity: 1, visible: false },
      { entity: 4, visible: true, duplicate_of: 1 },
      { entity: 2, visible: true, transparency: 0 },
    ];
    const states = composeLayerStates([0, 1, 2], edits, 0, 5, N_T);
    expect(states.map((s) => s.layerId)).toEqual([0]);
  });

  it("an edit outside its frame range is inert", () => {
    const edits: LayerEditJson[] = [
      { entity: 1, visible: true, frames: [2, 3], transparency: 0.5 },
    ];
    const at0 = composeLayerStates([0, 1], edits, 0, 5, N_T);
    const at2 = composeLayerStates([0, 1], edits, 2, 5, N_T);
    expect(at0.find((s) => s.layerId === 1)!.transparency).toBe(1);
    expect(at2.find((s) => s.layerId === 1)!.transparency).toBe(0.5);
  });

  it("rejects unknown layers and unknown duplicate sources", () => {
    expect(() => composeLayerStates([0], [{ entity: 5, visible: true }], 0, 5, N_T))
      .toThrow(/unknown/);
    expect(() =>
      composeLayerStates([0], [{ entity: 6, visible: true, duplicate_of: 5 }], 0, 5, N_T),
    ).toThrow(/unknown/);
  });
});
