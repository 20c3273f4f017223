/** Wire types for the scene preview service. */

export type CameraInfo = {
  id: number;
  width: number;
  height: number;
  fx: number;
  fy: number;
  cx: number;
  cy: number;
  /** camera-to-world rotation, row-major 3x3 */
  rotation: number[];
  position: number[];
};

export type SceneInfo = {
  entities: number[];
  n_t: number;
  fps: number | null;
  cameras: CameraInfo[];
  /** entity id (stringified) -> per-frame [[min xyz], [max xyz]] */
  boxes: Record<string, number[][][]>;
};

export type LayerInfo = {
  id: number;
  n_t: number;
  box_track: number[][][];
};

export type AffineJson = {
  /** row-major 3x3 */
  linear: number[];
  translation: number[];
};

export type LayerEditJson = {
  entity: number;
  visible: boolean;
  frames?: [number, number];
  affine?: AffineJson;
  retime?: { keys: [number, number][] };
  transparency?: number;
  duplicate_of?: number;
};

export type EditScriptJson = {
  version: number;
  output_frames: number;
  camera_path: unknown[] | null;
  edits: LayerEditJson[];
};

/** Either a dataset camera reference or a full free pose. */
export type CameraSpec = { camera: number } | CameraInfo;

export type RenderRequest = {
  frame: number;
  quality: "preview" | "full";
  camera: CameraSpec;
  edits: LayerEditJson[];
  resolution?: [number, number];
  seed?: number;
};

export type JobState = "queued" | "running" | "done" | "failed";

export type JobInfo = {
  id: string;
  state: JobState;
  progress: number;
  result?: string;
  error?: string;
};
