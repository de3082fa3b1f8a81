/** Annotation console wiring: song list, waveform annotation, adaptation,
 * and before/after reports.  All DSP and SDR numbers come from the service;
 * this file only renders them. */

import { api, ApiError, SongInfo, PeaksResponse, AnnotationResponse, ReportResponse } from "./api.js";
import { pollJob } from "./jobs.js";
import { buildAnnotationPayload, validateAnnotationPayload } from "./schema.js";
import {
  Draft,
  TimeScale,
  applyDrag,
  hitTest,
  makeDraft,
} from "./segments.js";
import { drawCursor, drawPeaks, drawSegments } from "./waveform.js";
import { drawSdrChart } from "./charts.js";
import { renderDraftList, renderSubmitResult, reportTable } from "./views.js";

const PX_PER_S = 20;

interface SessionState {
  songs: SongInfo[];
  selected: SongInfo | null;
  mixturePeaks: PeaksResponse | null;
  estimatePeaks: PeaksResponse | null;
  drafts: Draft[];
  submitted: { startS: number; endS: number }[];
  lastResponse: AnnotationResponse | null;
  playing: "mixture" | "estimate";
}

const state: SessionState = {
  songs: [],
  selected: null,
  mixturePeaks: null,
  estimatePeaks: null,
  drafts: [],
  submitted: [],
  lastResponse: null,
  playing: "estimate",
};

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

function notify(message: string, kind: "info" | "error" = "info"): void {
  const box = $("notices");
  const note = document.createElement("div");
  note.className = `notice ${kind}`;
  note.textContent = message;
  const dismiss = document.createElement("button");
  dismiss.textContent = "x";
  dismiss.onclick = () => note.remove();
  note.appendChild(dismiss);
  box.appendChild(note);
  if (kind === "info") {
    setTimeout(() => note.remove(), 6000);
  }
}

function describeError(err: unknown): string {
  if (err instanceof ApiError) return `service error ${err.status}: ${err.message}`;
  return err instanceof Error ? err.message : String(err);
}

// -- song list ---------------------------------------------------------------

async function refreshSongs(): Promise<void> {
  state.songs = await api.listSongs();
  const list = $("song-list");
  list.innerHTML = "";
  for (const song of state.songs) {
    const row = document.createElement("li");
    row.className = song.song_id === state.selected?.song_id ? "selected" : "";
    const label = document.createElement("span");
    label.textContent = `${song.song_id} (${song.split}, ${song.duration_s.toFixed(0)} s)`;
    row.appendChild(label);
    if (!song.has_estimate) {
      const badge = document.createElement("em");
      badge.textContent = " not separated";
      row.appendChild(badge);
    }
    row.onclick = () => selectSong(song).catch((e) => notify(describeError(e), "error"));
    list.appendChild(row);
  }
}

async function selectSong(song: SongInfo): Promise<void> {
  state.selected = song;
  state.drafts = [];
  state.lastResponse = null;
  await refreshSongs();
  $("annotate-title").textContent = `annotate: ${song.song_id}`;
  if (!song.has_estimate) {
    notify(`separating ${song.song_id}...`);
    const { job_id } = await api.separate(song.song_id);
    await pollJob(api.job, job_id, { intervalMs: 1000 });
    song.has_estimate = true;
    await refreshSongs();
  }
  state.mixturePeaks = await api.peaks(song.song_id, "mixture", PX_PER_S);
  state.estimatePeaks = await api.peaks(song.song_id, "estimate", PX_PER_S);
  const mixture = $("audio-mixture") as HTMLAudioElement;
  const estimate = $("audio-estimate") as HTMLAudioElement;
  mixture.src = api.audioUrl(song.song_id, "mixture");
  estimate.src = api.audioUrl(song.song_id, "estimate");
  setPlaybackSource(state.playing);
  redraw();
}

// -- annotation timeline -------------------------------------------------------

function scaleFor(peaks: PeaksResponse, canvas: HTMLCanvasElement): TimeScale {
  canvas.width = peaks.peaks.length;
  return new TimeScale(peaks.duration_s, canvas.width);
}

function redraw(): void {
  if (!state.mixturePeaks || !state.estimatePeaks) return;
  const mixCanvas = $("wave-mixture") as HTMLCanvasElement;
  const estCanvas = $("wave-estimate") as HTMLCanvasElement;
  for (const [canvas, peaks, withSegments] of [
    [mixCanvas, state.mixturePeaks, false],
    [estCanvas, state.estimatePeaks, true],
  ] as const) {
    const scale = scaleFor(peaks, canvas);
    const ctx = canvas.getContext("2d");
    if (!ctx) continue;
    drawPeaks(ctx, peaks.peaks, canvas.width, canvas.height);
    if (withSegments) {
      drawSegments(ctx, state.drafts, state.submitted, scale, canvas.height);
    }
    const audio = $(state.playing === "mixture" ? "audio-mixture" : "audio-estimate") as HTMLAudioElement;
    if (!Number.isNaN(audio.currentTime)) {
      drawCursor(ctx, audio.currentTime, scale, canvas.height);
    }
  }
  renderDraftList($("draft-list"), state.drafts,
                  state.selected?.duration_s ?? 0, (id) => {
    state.drafts = state.drafts.filter((x) => x.id !== id);
    redraw();
  });
}

function wireTimeline(): void {
  const canvas = $("wave-estimate") as HTMLCanvasElement;
  let drag: { mode: ReturnType<typeof hitTest>; fromS: number; original: Draft | null } | null = null;

  const eventTime = (ev: MouseEvent): number => {
    if (!state.estimatePeaks) return 0;
    const rect = canvas.getBoundingClientRect();
    const scale = new TimeScale(state.estimatePeaks.duration_s, canvas.width);
    return scale.pxToTime(((ev.clientX - rect.left) / rect.width) * canvas.width);
  };

  canvas.onmousedown = (ev) => {
    if (!state.selected) return;
    const t = eventTime(ev);
    const hit = hitTest(state.drafts, t, 0.25);
    if (hit.mode === "create") {
      const draft = makeDraft(t, t + 0.05);
      state.drafts.push(draft);
      drag = { mode: { mode: "resize-end", draft }, fromS: t, original: { ...draft } };
    } else {
      drag = { mode: hit, fromS: t, original: hit.draft ? { ...hit.draft } : null };
    }
  };
  canvas.onmousemove = (ev) => {
    if (!drag || !drag.mode.draft || !drag.original || !state.selected) return;
    const t = eventTime(ev);
    const updated = applyDrag(drag.original, drag.mode.mode, drag.fromS, t,
                              state.selected.duration_s);
    state.drafts = state.drafts.map((d) => (d.id === updated.id ? updated : d));
    const idx = state.drafts.findIndex((d) => d.id === updated.id);
    drag.mode = { mode: drag.mode.mode, draft: state.drafts[idx] };
    redraw();
  };
  const finish = () => {
    drag = null;
    redraw();
  };
  canvas.onmouseup = finish;
  canvas.onmouseleave = finish;
}

async function submitAnnotations(): Promise<void> {
  if (!state.selected) {
    notify("select a song first", "error");
    return;
  }
  const payload = buildAnnotationPayload(state.selected.song_id, state.drafts);
  const problems = validateAnnotationPayload(payload);
  if (problems.length > 0) {
    notify(`payload invalid: ${problems[0].path} ${problems[0].message}`, "error");
    return;
  }
  const resp = await api.submitAnnotations(payload);
  state.lastResponse = resp;
  state.submitted = resp.kept.map((s) => ({ startS: s.start_s, endS: s.end_s }));
  state.drafts = [];
  renderSubmitResult($("submit-result"), resp);
  redraw();
}

// -- playback -------------------------------------------------------------------

function setPlaybackSource(kind: "mixture" | "estimate"): void {
  state.playing = kind;
  const mixture = $("audio-mixture") as HTMLAudioElement;
  const estimate = $("audio-estimate") as HTMLAudioElement;
  mixture.muted = kind !== "mixture";
  estimate.muted = kind !== "estimate";
  $("ab-toggle").textContent = `listening to: ${kind}`;
}

function wirePlayback(): void {
  const mixture = $("audio-mixture") as HTMLAudioElement;
  const estimate = $("audio-estimate") as HTMLAudioElement;
  $("play").onclick = () => {
    void mixture.play();
    void estimate.play();
  };
  $("pause").onclick = () => {
    mixture.pause();
    estimate.pause();
  };
  $("ab-toggle").onclick = () => {
    setPlaybackSource(state.playing === "mixture" ? "estimate" : "mixture");
    // keep the two elements in lockstep when toggling
    estimate.currentTime = mixture.currentTime;
  };
  mixture.ontimeupdate = () => redraw();
}

// -- adaptation -------------------------------------------------------------------

async function launchAdaptation(): Promise<void> {
  const method = ($("adapt-method") as HTMLSelectElement).value;
  const fraction = parseFloat(($("adapt-fraction") as HTMLInputElement).value);
  const seed = parseInt(($("adapt-seed") as HTMLInputElement).value, 10);
  const body: Record<string, unknown> = { method, seed };
  if (!Number.isNaN(fraction)) {
    body.exemplar_fraction = fraction;
  }
  const progress = $("adapt-progress");
  try {
    const { job_id } = await api.adapt(body);
    progress.textContent = `adaptation queued (${job_id})`;
    const job = await pollJob(api.job, job_id, {
      intervalMs: 1000,
      onUpdate: (j) => {
        progress.textContent = `adaptation ${j.state}: ${(j.progress * 100).toFixed(0)}%`;
      },
    });
    progress.textContent = `adaptation done: ${job.detail ?? job.result_ref}`;
    notify("adaptation finished; evaluating test split...");
    const ev = await api.evaluate("test");
    await pollJob(api.job, ev.job_id, { intervalMs: 1000 });
    await renderReports();
  } catch (err) {
    progress.textContent = "";
    notify(describeError(err), "error");
  }
}

// -- reports --------------------------------------------------------------------

async function renderReports(): Promise<void> {
  const box = $("report-body");
  box.innerHTML = "";
  let current: ReportResponse;
  try {
    current = await api.reports("current", "test");
  } catch (err) {
    box.textContent = "no report yet - run an evaluation first";
    return;
  }
  let previous: ReportResponse | null = null;
  try {
    previous = await api.reports("previous", "test");
  } catch {
    /* no previous model evaluated */
  }
  box.appendChild(reportTable(current, previous));

  const picker = document.createElement("select");
  for (const sid of Object.keys(current.songs).sort()) {
    const opt = document.createElement("option");
    opt.value = sid;
    opt.textContent = `framewise SDR: ${sid}`;
    picker.appendChild(opt);
  }
  const chart = document.createElement("canvas");
  chart.width = 720;
  chart.height = 220;
  const drawFor = (sid: string) => {
    const ctx = chart.getContext("2d");
    if (!ctx) return;
    const series = [];
    if (previous?.songs[sid]) {
      series.push({ label: "previous", color: "#5b8def", frames: previous.songs[sid].frames });
    }
    series.push({ label: "current", color: "#f2a141", frames: current.songs[sid].frames });
    drawSdrChart(ctx, series, current.songs[sid].frame_s);
  };
  picker.onchange = () => drawFor(picker.value);
  box.appendChild(picker);
  box.appendChild(chart);
  const first = Object.keys(current.songs).sort()[0];
  if (first) drawFor(first);

  const rollback = document.createElement("button");
  rollback.textContent = "roll back to previous model";
  rollback.onclick = async () => {
    try {
      const r = await api.rollback();
      notify(`rolled back to checkpoint ${r.checkpoint}`);
      await renderReports();
    } catch (err) {
      notify(describeError(err), "error");
    }
  };
  box.appendChild(rollback);
}

// -- bootstrap --------------------------------------------------------------------

export function start(): void {
  wireTimeline();
  wirePlayback();
  $("submit").onclick = () => void submitAnnotations().catch(
    (e) => notify(describeError(e), "error"));
  $("adapt-run").onclick = () => void launchAdaptation();
  $("report-refresh").onclick = () => void renderReports();
  refreshSongs().catch((e) => notify(describeError(e), "error"));
  renderReports().catch(() => undefined);
}

if (typeof document !== "undefined" && document.getElementById("song-list")) {
  start();
}
