"""HTTP service for the interactive loop: browse songs, separate, annotate,
adapt, evaluate, and compare before/after reports.

The workspace is a directory:

    <root>/dataset/...            train/hitl/test song folders
    <root>/models/ckpt-NNN.bin    append-only checkpoint history
    <root>/models/state.json      {"history": [...], "current": N}
    <root>/annotations/<song>.json
    <root>/estimates/<song>.wav
    <root>/reports/ckpt-N-<split>.json
    <root>/jobs.json              persisted job queue
    <root>/workspace.json         pipeline settings

Separation jobs for distinct songs may run concurrently; adapt/evaluate
jobs run one at a time on a dedicated worker.
"""

from __future__ import annotations

import io
import json
import threading
import uuid
from collections import deque
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np
from fastapi import FastAPI, HTTPException, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from . import dsp
from .adapt import AdaptConfig, run_adaptation
from .annotate import load_annotations, normalize, save_annotations
from .data import DataError, build_exemplar_store, load_dataset
from .evaluate import evaluate_model
from .model import NetConfig, load_checkpoint, save_checkpoint
from .pipeline import PipelineConfig, separate_vocals


class ServiceError(Exception):
    pass


@dataclass
class Job:
    job_id: str
    kind: str                  # separate | adapt | evaluate
    state: str = "queued"      # queued -> running -> done | failed
    progress: float = 0.0
    result_ref: str | None = None
    error_message: str | None = None
    detail: str | None = None
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


class Workspace:
    """Owns the dataset, the model history, annotations, and the job queue."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        for sub in ("models", "annotations", "estimates", "reports"):
            (self.root / sub).mkdir(parents=True, exist_ok=True)
        ws_file = self.root / "workspace.json"
        if not ws_file.is_file():
            raise ServiceError(
                f"{self.root} is not an initialized workspace "
                "(missing workspace.json); see `vocalsep serve --help`"
            )
        settings = json.loads(ws_file.read_text())
        self.sample_rate = int(settings["sample_rate"])
        self.hop = int(settings["hop"])
        self.splits = load_dataset(self.root / "dataset")
        self._songs = {e.song_id: (e, split.name)
                       for split in self.splits for e in split}

        self._lock = threading.RLock()
        self._model_state = self._load_model_state()
        self._net_cache: tuple[int, object] | None = None

        self.jobs: dict[str, Job] = {}
        self._heavy_queue: deque[str] = deque()
        self._separate_queue: deque[str] = deque()
        self._workers_started = False
        self._wake = threading.Condition(self._lock)
        self._load_jobs()

    # -- model history -------------------------------------------------------

    def _load_model_state(self) -> dict:
        state_file = self.root / "models" / "state.json"
        if state_file.is_file():
            return json.loads(state_file.read_text())
        ckpts = sorted(p.name for p in (self.root / "models").glob("ckpt-*.bin"))
        if not ckpts:
            raise ServiceError(
                f"workspace {self.root} has no model checkpoint; train one first"
            )
        state = {"history": ckpts, "current": len(ckpts) - 1}
        state_file.write_text(json.dumps(state, indent=2))
        return state

    def _save_model_state(self):
        (self.root / "models" / "state.json").write_text(
            json.dumps(self._model_state, indent=2)
        )

    @property
    def current_index(self) -> int:
        return self._model_state["current"]

    def checkpoint_path(self, index: int) -> Path:
        return self.root / "models" / self._model_state["history"][index]

    def current_net(self):
        with self._lock:
            idx = self.current_index
            if self._net_cache and self._net_cache[0] == idx:
                return self._net_cache[1]
            net, _ = load_checkpoint(self.checkpoint_path(idx))
            self._net_cache = (idx, net)
            return net

    def append_checkpoint(self, net) -> int:
        with self._lock:
            n = len(self._model_state["history"])
            name = f"ckpt-{n:03d}.bin"
            save_checkpoint(net, self.root / "models" / name)
            self._model_state["history"].append(name)
            self._model_state["current"] = n
            self._net_cache = (n, net)
            self._save_model_state()
            return n

    def rollback(self) -> int:
        with self._lock:
            if self.current_index == 0:
                raise ServiceError("no previous checkpoint to roll back to")
            self._model_state["current"] -= 1
            self._net_cache = None
            self._save_model_state()
            return self.current_index

    def pipeline(self) -> PipelineConfig:
        net = self.current_net()
        return PipelineConfig.for_net(net.config, self.sample_rate, self.hop)

    # -- songs ----------------------------------------------------------------

    def song(self, song_id: str):
        if song_id not in self._songs:
            raise KeyError(song_id)
        return self._songs[song_id]

    def estimate_path(self, song_id: str) -> Path:
        return self.root / "estimates" / f"{song_id}.wav"

    def annotation_path(self, song_id: str) -> Path:
        return self.root / "annotations" / f"{song_id}.json"

    # -- job queue -------------------------------------------------------------

    def _jobs_file(self) -> Path:
        return self.root / "jobs.json"

    def _persist_jobs(self):
        doc = {
            "jobs": {jid: j.to_dict() for jid, j in self.jobs.items()},
            "heavy_queue": list(self._heavy_queue),
            "separate_queue": list(self._separate_queue),
        }
        self._jobs_file().write_text(json.dumps(doc, indent=2))

    def _load_jobs(self):
        f = self._jobs_file()
        if not f.is_file():
            return
        doc = json.loads(f.read_text())
        for jid, jd in doc.get("jobs", {}).items():
            job = Job(**jd)
            if job.state == "running":  # interrupted by a restart
                job.state = "failed"
                job.error_message = "interrupted by service restart"
            self.jobs[jid] = job
        for jid in doc.get("heavy_queue", []):
            if self.jobs.get(jid) and self.jobs[jid].state == "queued":
                self._heavy_queue.append(jid)
        for jid in doc.get("separate_queue", []):
            if self.jobs.get(jid) and self.jobs[jid].state == "queued":
                self._separate_queue.append(jid)
        self._persist_jobs()

    def has_active_adapt(self) -> bool:
        return any(j.kind == "adapt" and j.state in ("queued", "running")
                   for j in self.jobs.values())

    def enqueue(self, kind: str, params: dict) -> Job:
        with self._lock:
            job = Job(job_id=uuid.uuid4().hex[:12], kind=kind, params=params)
            self.jobs[job.job_id] = job
            if kind == "separate":
                self._separate_queue.append(job.job_id)
            else:
                self._heavy_queue.append(job.job_id)
            self._persist_jobs()
            self.ensure_workers()
            self._wake.notify_all()
            return job

    def _update_job(self, job: Job, **fields):
        with self._lock:
            for k, v in fields.items():
                if k == "progress":
                    v = max(v, job.progress)  # progress never regresses
                setattr(job, k, v)
            self._persist_jobs()

    def ensure_workers(self):
        with self._lock:
            if self._workers_started:
                return
            self._workers_started = True
            threading.Thread(target=self._worker_loop,
                             args=(self._heavy_queue,), daemon=True).start()
            for _ in range(2):
                threading.Thread(target=self._worker_loop,
                                 args=(self._separate_queue,), daemon=True).start()

    def _worker_loop(self, queue: deque):
        while True:
            with self._wake:
                while not queue:
                    self._wake.wait(timeout=0.5)
                jid = queue.popleft()
                job = self.jobs[jid]
                if job.state != "queued":
                    continue
                job.state = "running"
                self._persist_jobs()
            try:
                self._run_job(job)
                if job.state == "running":
                    self._update_job(job, state="done", progress=1.0)
            except Exception as exc:  # jobs must never kill the service
                self._update_job(job, state="failed", error_message=str(exc))

    # -- job bodies --------------------------------------------------------------

    def _run_job(self, job: Job):
        if job.kind == "separate":
            self._job_separate(job)
        elif job.kind == "adapt":
            self._job_adapt(job)
        elif job.kind == "evaluate":
            self._job_evaluate(job)
        else:
            raise ServiceError(f"unknown job kind {job.kind}")

    def _job_separate(self, job: Job):
        song_id = job.params["song_id"]
        entry, _ = self.song(song_id)
        net = self.current_net()
        pipe = self.pipeline()
        self._update_job(job, progress=0.1)
        estimate = separate_vocals(net, entry.load("mixture"), pipe)
        dsp.save_wav(estimate, self.estimate_path(song_id))
        self._update_job(job, progress=1.0,
                         result_ref=f"estimates/{song_id}.wav")

    def _job_adapt(self, job: Job):
        cfg = AdaptConfig.from_dict(job.params["config"])
        song_ids = job.params.get("song_ids")
        hitl = next(s for s in self.splits if s.name == "hitl")
        train = next(s for s in self.splits if s.name == "train")
        entries = [e for e in hitl
                   if song_ids is None or e.song_id in song_ids]
        annotations = {}
        for e in entries:
            path = self.annotation_path(e.song_id)
            if path.is_file():
                annotations[e.song_id] = load_annotations(path)
        self._update_job(job, progress=0.1)
        pipe = self.pipeline()
        store = build_exemplar_store(
            train, pipe, fraction=cfg.effective_fraction, seed=cfg.seed,
        )
        self._update_job(job, progress=0.3)
        result = run_adaptation(self.current_net(), entries, annotations,
                                train, store, cfg, pipe)
        self._update_job(job, progress=0.8)
        if result.warnings and not result.batch_audit:
            self._update_job(
                job,
                result_ref=self._model_state["history"][self.current_index],
                detail="; ".join(result.warnings),
            )
            return
        idx = self.append_checkpoint(result.net)
        self._update_job(
            job,
            result_ref=self._model_state["history"][idx],
            detail=f"{len(result.batch_audit)} batches",
        )

    def _job_evaluate(self, job: Job):
        split_name = job.params["split"]
        split = next(s for s in self.splits if s.name == split_name)
        if len(split) == 0:
            raise ServiceError(f"no songs in split {split_name!r}")
        pipe = self.pipeline()
        idx = self.current_index
        self._update_job(job, progress=0.1)
        report = evaluate_model(self.current_net(), split, pipe)
        ref = f"reports/ckpt-{idx}-{split_name}.json"
        doc = {"model_index": idx, "split": split_name, **report.to_dict()}
        (self.root / ref).write_text(json.dumps(doc, indent=2))
        self._update_job(job, progress=1.0, result_ref=ref)


# -- request bodies -------------------------------------------------------------


class SegmentIn(BaseModel):
    start_s: float
    end_s: float


class AnnotationIn(BaseModel):
    song_id: str
    annotator: Literal["human", "simulated"]
    segments: list[SegmentIn]


class SeparateIn(BaseModel):
    song_id: str


class AdaptIn(BaseModel):
    method: Literal["zero_target", "synthetic"] = "zero_target"
    lr: float = 1e-5
    epochs: int = 1
    x: int = 1
    y: int = 15
    z: int = 1
    exemplar_fraction: float | None = None
    seed: int = 0
    song_ids: list[str] | None = None


class EvaluateIn(BaseModel):
    split: Literal["train", "hitl", "test"] = "test"


# -- app ----------------------------------------------------------------------


def create_app(workspace: Workspace, ui_dir: str | Path | None = None) -> FastAPI:
    from contextlib import asynccontextmanager

    ws = workspace

    @asynccontextmanager
    async def lifespan(app):
        ws.ensure_workers()
        yield

    app = FastAPI(title="vocalsep", lifespan=lifespan)

    @app.get("/api/songs")
    def list_songs():
        return [
            {
                "song_id": e.song_id,
                "split": split_name,
                "duration_s": e.duration_s,
                "has_estimate": ws.estimate_path(e.song_id).is_file(),
            }
            for e, split_name in (ws.song(sid) for sid in sorted(ws._songs))
        ]

    @app.post("/api/separate", status_code=202)
    def post_separate(body: SeparateIn):
        try:
            ws.song(body.song_id)
        except KeyError:
            raise HTTPException(404, f"unknown song {body.song_id!r}")
        job = ws.enqueue("separate", {"song_id": body.song_id})
        return {"job_id": job.job_id}

    @app.get("/api/songs/{song_id}/audio")
    def get_audio(song_id: str, kind: Literal["mixture", "estimate"] = "mixture"):
        try:
            entry, _ = ws.song(song_id)
        except KeyError:
            raise HTTPException(404, f"unknown song {song_id!r}")
        if kind == "mixture":
            path = entry.mixture_path
        else:
            path = ws.estimate_path(song_id)
            if not path.is_file():
                raise HTTPException(404, f"no estimate for {song_id!r} yet")
        return Response(content=path.read_bytes(), media_type="audio/wav")

    @app.get("/api/songs/{song_id}/peaks")
    def get_peaks(song_id: str,
                  kind: Literal["mixture", "estimate"] = "mixture",
                  px_per_s: int = 20):
        try:
            entry, _ = ws.song(song_id)
        except KeyError:
            raise HTTPException(404, f"unknown song {song_id!r}")
        if px_per_s < 1 or px_per_s > 1000:
            raise HTTPException(422, "px_per_s must be in [1, 1000]")
        if kind == "mixture":
            clip = entry.load("mixture")
        else:
            path = ws.estimate_path(song_id)
            if not path.is_file():
                raise HTTPException(404, f"no estimate for {song_id!r} yet")
            clip = dsp.mixdown(dsp.load_wav(path))
        samples_per_px = max(1, int(round(clip.sample_rate / px_per_s)))
        n_px = int(np.ceil(clip.n_samples / samples_per_px))
        peaks = []
        for i in range(n_px):
            seg = clip.samples[i * samples_per_px: (i + 1) * samples_per_px]
            peaks.append([float(seg.min()), float(seg.max())])
        return {
            "song_id": song_id,
            "kind": kind,
            "px_per_s": px_per_s,
            "duration_s": clip.duration_seconds,
            "peaks": peaks,
        }

    @app.post("/api/annotations")
    def post_annotations(body: AnnotationIn):
        try:
            entry, _ = ws.song(body.song_id)
        except KeyError:
            raise HTTPException(404, f"unknown song {body.song_id!r}")
        result = normalize(
            body.song_id,
            [(s.start_s, s.end_s) for s in body.segments],
            entry.duration_s,
            annotator=body.annotator,
        )
        save_annotations(result.annotation, ws.annotation_path(body.song_id))
        return {
            "song_id": body.song_id,
            "annotator": body.annotator,
            "submitted": result.n_submitted,
            "kept": [{"start_s": s.start_s, "end_s": s.end_s}
                     for s in result.kept],
            "dropped": [
                {"start_s": seg.start_s, "end_s": seg.end_s, "reason": reason}
                for seg, reason in result.dropped
            ],
            "dispositions": result.dispositions,
        }

    @app.post("/api/adapt", status_code=202)
    def post_adapt(body: AdaptIn):
        with ws._lock:
            if ws.has_active_adapt():
                raise HTTPException(
                    409, "an adaptation job is already queued or running"
                )
            cfg = AdaptConfig(
                method=body.method, lr=body.lr, epochs=body.epochs,
                x=body.x, y=body.y, z=body.z,
                exemplar_fraction=body.exemplar_fraction, seed=body.seed,
            )
            job = ws.enqueue("adapt", {"config": cfg.to_dict(),
                                       "song_ids": body.song_ids})
        return {"job_id": job.job_id}

    @app.get("/api/jobs/{job_id}")
    def get_job(job_id: str):
        job = ws.jobs.get(job_id)
        if job is None:
            raise HTTPException(404, f"unknown job {job_id!r}")
        return job.to_dict()

    @app.post("/api/evaluate", status_code=202)
    def post_evaluate(body: EvaluateIn):
        job = ws.enqueue("evaluate", {"split": body.split})
        return {"job_id": job.job_id}

    @app.get("/api/reports")
    def get_reports(model: Literal["current", "previous"] = "current",
                    split: str = "test"):
        idx = ws.current_index
        if model == "previous":
            if idx == 0:
                raise HTTPException(404, "no previous model")
            idx -= 1
        path = ws.root / f"reports/ckpt-{idx}-{split}.json"
        if not path.is_file():
            raise HTTPException(
                404, f"no report for checkpoint {idx} on split {split!r}; "
                     "run POST /api/evaluate first"
            )
        return json.loads(path.read_text())

    @app.post("/api/model/rollback")
    def post_rollback():
        try:
            idx = ws.rollback()
        except ServiceError as exc:
            raise HTTPException(409, str(exc))
        return {"current_index": idx,
                "checkpoint": ws._model_state["history"][idx]}

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


def init_workspace(root: str | Path, dataset_dir: str | Path,
                   checkpoint: str | Path, sample_rate: int,
                   hop: int) -> Workspace:
    """Lay out a workspace directory around an existing dataset and model."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    dataset_link = root / "dataset"
    if not dataset_link.exists():
        dataset_link.symlink_to(Path(dataset_dir).resolve())
    models = root / "models"
    models.mkdir(exist_ok=True)
    target = models / "ckpt-000.bin"
    if not target.is_file():
        target.write_bytes(Path(checkpoint).read_bytes())
    (root / "workspace.json").write_text(json.dumps(
        {"sample_rate": sample_rate, "hop": hop}, indent=2))
    return Workspace(root)
