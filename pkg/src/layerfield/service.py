"""HTTP preview service.

Serves scene metadata and render jobs over plain HTTP for the browser
editor.  Everything is stateless except the in-memory job table: an image
is fully determined by (checkpoint, request), so restarting the service
and replaying a request reproduces it bit for bit.

Endpoints:
  GET  /scene        scene metadata (entities, frames, cameras, boxes)
  GET  /layers/{id}  one layer's box track
  POST /render       RenderRequest -> {"job": id}; renders asynchronously
  GET  /jobs/{id}    job status (queued/running/done/failed + progress)
  GET  /images/{id}  finished render as PNG
  POST /validate     edit script -> {"violations": [...]}
"""

from __future__ import annotations

import io
import json
import queue
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .checkpoint import load_checkpoint
from .data import load_cameras
from .cameras import camera_to_dict
from .editing import (EditScript, compose_scene, pose_to_camera,
                      script_from_dict, validate_script, _edit_from_dict)
from .rendering import RenderConfig, render_image

_MAX_BODY = 10 * 1024 * 1024
_STATES = ("queued", "running", "done", "failed")


class _Job:
    __slots__ = ("id", "state", "progress", "error", "png")

    def __init__(self, jid):
        self.id = jid
        self.state = "queued"
        self.progress = 0.0
        self.error = None
        self.png = None

    def advance(self, state, lock):
        with lock:
            if _STATES.index(state) < _STATES.index(self.state):
                raise RuntimeError(f"job state {self.state} -> {state}")
            self.state = state

    def status(self) -> dict:
        out = {"id": self.id, "state": self.state,
               "progress": round(self.progress, 4)}
        if self.state == "done":
            out["result"] = f"/images/{self.id}"
        if self.error:
            out["error"] = self.error
        return out


class _App:
    """Shared state behind the handler: checkpoint, job table, workers."""

    def __init__(self, checkpoint_path, dataset=None, workers=1):
        self.fields, self.boxes, self.meta = load_checkpoint(checkpoint_path)
        self.n_t = self.meta["n_t"]
        self.cameras = {}
        if dataset:
            self.cameras = {c.cam_id: c for c in load_cameras(dataset)}
        self.lock = threading.Lock()
        self.jobs = {}
        self.queue = queue.Queue()
        self.next_id = 1
        self.workers = [threading.Thread(target=self._work, daemon=True)
                        for _ in range(max(workers, 1))]
        for w in self.workers:
            w.start()

    # job plumbing

    def submit(self, request: dict) -> str:
        with self.lock:
            jid = str(self.next_id)
            self.next_id += 1
            job = _Job(jid)
            self.jobs[jid] = job
        self.queue.put((jid, request))
        return jid

    def _work(self):
        while True:
            item = self.queue.get()
            if item is None:
                return
            jid, request = item
            job = self.jobs[jid]
            job.advance("running", self.lock)
            try:
                png = self._render(request, job)
            except Exception as e:  # noqa: BLE001  (job boundary)
                job.error = " ".join(str(e).split())
                job.advance("failed", self.lock)
                continue
            job.png = png
            job.progress = 1.0
            job.advance("done", self.lock)

    # rendering

    def _camera_for(self, request: dict):
        cam_spec = request.get("camera")
        if cam_spec is None:
            raise ValueError("request needs a camera")
        if "camera" in cam_spec:
            cid = int(cam_spec["camera"])
            if cid not in self.cameras:
                raise ValueError(f"camera {cid} not available (serve with --dataset)")
            return self.cameras[cid]
        like = self.cameras.get(min(self.cameras)) if self.cameras else None
        return pose_to_camera(cam_spec, like=like, cam_id=0)

    def _render_config(self, quality: str) -> RenderConfig:
        if quality == "preview":
            return RenderConfig(coarse_samples=8, fine_samples=8)
        r = (self.meta.get("train_meta") or {}).get("render") or {}
        return RenderConfig(coarse_samples=int(r.get("coarse_samples", 16)),
                            fine_samples=int(r.get("fine_samples", 16)))

    def parse_request(self, request: dict):
        """Validate a RenderRequest; raises ValueError listing violations."""
        bad = []
        t = int(request.get("frame", 0))
        if not (0 <= t < self.n_t):
            bad.append(f"frame {t} outside [0, {self.n_t - 1}]")
        quality = request.get("quality", "preview")
        if quality not in ("preview", "full"):
            bad.append(f"unknown quality {quality!r}")
        res = request.get("resolution")
        if res is not None and (len(res) != 2 or min(res) < 1):
            bad.append(f"resolution {res} must be two positive integers")
        edits = [_edit_from_dict(d) for d in request.get("edits", [])]
        script = EditScript(output_frames=self.n_t, edits=edits)
        bad += validate_script(script, self.n_t, sorted(self.fields))
        if bad:
            raise ValueError("; ".join(bad))
        return t, quality, res, script

    def _render(self, request: dict, job: _Job) -> bytes:
        t, quality, res, script = self.parse_request(request)
        cam = self._camera_for(request)
        if res is None and quality == "preview":
            factor = min(160 / cam.width, 90 / cam.height, 1.0)
        elif res is not None:
            factor = min(res[0] / cam.width, res[1] / cam.height)
        else:
            factor = 1.0
        if factor != 1.0:
            cam = cam.scaled(factor)
        rcfg = self._render_config(quality)
        seed = int(request.get("seed", 0))
        layers = compose_scene(self.fields, self.boxes, script, t, self.n_t)

        def tick(done, total):
            job.progress = done / total

        img, _ = render_image(cam, layers, rcfg, seed=seed,
                              camera_tag=cam.cam_id, progress=tick)
        buf = io.BytesIO()
        from . import tensorio
        tensorio.save_png_rgb(buf, img)
        return buf.getvalue()

    # metadata

    def scene_dict(self) -> dict:
        return {
            "entities": sorted(self.fields),
            "n_t": self.n_t,
            "fps": self.meta.get("fps"),
            "cameras": [camera_to_dict(c) for _, c in sorted(self.cameras.items())],
            "boxes": {str(k): np.asarray(v).tolist() for k, v in self.boxes.items()},
        }

    def layer_dict(self, lid: int) -> dict:
        if lid not in self.boxes:
            raise KeyError(lid)
        return {"id": lid, "n_t": self.n_t,
                "box_track": np.asarray(self.boxes[lid]).tolist()}

    def stop(self):
        for _ in self.workers:
            self.queue.put(None)


class _Handler(BaseHTTPRequestHandler):
    server_version = "layerfield"
    protocol_version = "HTTP/1.1"

    @property
    def app(self) -> _App:
        return self.server.app

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _send_json(self, obj, code=200):
        body = json.dumps(obj).encode()
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def _send_png(self, data: bytes):
        self.send_response(200)
        self.send_header("Content-Type", "image/png")
        self.send_header("Content-Length", str(len(data)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(data)

    def _read_body(self):
        n = int(self.headers.get("Content-Length", 0))
        if n <= 0 or n > _MAX_BODY:
            raise ValueError(f"body length {n} unacceptable")
        return json.loads(self.rfile.read(n).decode("utf-8"))

    def do_OPTIONS(self):
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_GET(self):
        parts = self.path.rstrip("/").split("/")
        try:
            if self.path == "/scene":
                self._send_json(self.app.scene_dict())
            elif len(parts) == 3 and parts[1] == "layers":
                try:
                    self._send_json(self.app.layer_dict(int(parts[2])))
                except (KeyError, ValueError):
                    self._send_json({"error": f"unknown layer {parts[2]}"}, 404)
            elif len(parts) == 3 and parts[1] == "jobs":
                job = self.app.jobs.get(parts[2])
                if job is None:
                    self._send_json({"error": f"unknown job {parts[2]}"}, 404)
                else:
                    self._send_json(job.status())
            elif len(parts) == 3 and parts[1] == "images":
                job = self.app.jobs.get(parts[2])
                if job is None or job.state != "done":
                    self._send_json({"error": f"no image for job {parts[2]}"}, 404)
                else:
                    self._send_png(job.png)
            else:
                self._send_json({"error": f"no route {self.path}"}, 404)
        except BrokenPipeError:
            pass

    def do_POST(self):
        try:
            if self.path.rstrip("/") == "/render":
                try:
                    request = self._read_body()
                    self.app.parse_request(request)  # reject before queueing
                    self.app._camera_for(request)
                except (ValueError, KeyError) as e:
                    self._send_json({"violations": str(e).split("; ")}, 400)
                    return
                jid = self.app.submit(request)
                self._send_json({"job": jid, "status": f"/jobs/{jid}"})
            elif self.path.rstrip("/") == "/validate":
                try:
                    body = self._read_body()
                except ValueError as e:
                    self._send_json({"violations": [str(e)]}, 400)
                    return
                if "output_frames" not in body:
                    body = dict(body, output_frames=self.app.n_t)
                try:
                    script = script_from_dict(body)
                    bad = validate_script(script, self.app.n_t,
                                          sorted(self.app.fields))
                except (KeyError, TypeError, ValueError) as e:
                    bad = [f"malformed script: {e}"]
                self._send_json({"violations": bad})
            else:
                self._send_json({"error": f"no route {self.path}"}, 404)
        except BrokenPipeError:
            pass


def build_server(checkpoint, host="127.0.0.1", port=0, dataset=None,
                 workers=1) -> ThreadingHTTPServer:
    """Bound but not yet serving; tests read server.server_address."""
    app = _App(checkpoint, dataset=dataset, workers=workers)
    server = ThreadingHTTPServer((host, port), _Handler)
    server.app = app
    return server


def run_service(checkpoint, host, port, dataset=None, workers=1):
    server = build_server(checkpoint, host, port, dataset=dataset, workers=workers)
    host_, port_ = server.server_address[:2]
    print(f"serving on http://{host_}:{port_}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.app.stop()
        server.server_close()
