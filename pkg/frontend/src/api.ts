/** Thin typed client over the service HTTP API; all numbers shown anywhere
 * in the UI come from these responses. */

import type { Job } from "./jobs.js";
import type { AnnotationPayload } from "./schema.js";

export interface SongInfo {
  song_id: string;
  split: string;
  duration_s: number;
  has_estimate: boolean;
}

export interface PeaksResponse {
  song_id: string;
  kind: string;
  px_per_s: number;
  duration_s: number;
  peaks: [number, number][];
}

export interface Disposition {
  status: "kept" | "dropped" | "rejected";
  reason: string | null;
  resolved?: { start_s: number; end_s: number };
}

export interface AnnotationResponse {
  song_id: string;
  submitted: number;
  kept: { start_s: number; end_s: number }[];
  dropped: { start_s: number; end_s: number; reason: string }[];
  dispositions: Disposition[];
}

export interface FrameRow {
  frame_index: number;
  sdr_db: number | null;
}

export interface SongReport {
  mean_sdr: number;
  median_sdr: number;
  excluded_frames: number;
  frame_s: number;
  frames: FrameRow[];
}

export interface ReportResponse {
  model_index: number;
  split: string;
  mean_sdr: number;
  median_sdr: number;
  songs: Record<string, SongReport>;
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function request<T>(path: string, init?: RequestInit): Promise<T> {
  const resp = await fetch(path, {
    headers: { "content-type": "application/json" },
    ...init,
  });
  if (!resp.ok) {
    let detail = resp.statusText;
    try {
      const body = await resp.json();
      detail = typeof body.detail === "string" ? body.detail : JSON.stringify(body.detail);
    } catch {
      /* plain-text error body */
    }
    throw new ApiError(resp.status, detail);
  }
  return (await resp.json()) as T;
}

export const api = {
  listSongs: () => request<SongInfo[]>("/api/songs"),
  separate: (songId: string) =>
    request<{ job_id: string }>("/api/separate", {
      method: "POST",
      body: JSON.stringify({ song_id: songId }),
    }),
  audioUrl: (songId: string, kind: "mixture" | "estimate") =>
    `/api/songs/${encodeURIComponent(songId)}/audio?kind=${kind}`,
  peaks: (songId: string, kind: "mixture" | "estimate", pxPerS: number) =>
    request<PeaksResponse>(
      `/api/songs/${encodeURIComponent(songId)}/peaks?kind=${kind}&px_per_s=${pxPerS}`,
    ),
  submitAnnotations: (payload: AnnotationPayload) =>
    request<AnnotationResponse>("/api/annotations", {
      method: "POST",
      body: JSON.stringify(payload),
    }),
  adapt: (config: Record<string, unknown>) =>
    request<{ job_id: string }>("/api/adapt", {
      method: "POST",
      body: JSON.stringify(config),
    }),
  evaluate: (split: string) =>
    request<{ job_id: string }>("/api/evaluate", {
      method: "POST",
      body: JSON.stringify({ split }),
    }),
  job: (jobId: string) => request<Job>(`/api/jobs/${jobId}`),
  reports: (model: "current" | "previous", split: string) =>
    request<ReportResponse>(`/api/reports?model=${model}&split=${split}`),
  rollback: () =>
    request<{ current_index: number; checkpoint: string }>(
      "/api/model/rollback",
      { method: "POST", body: "{}" },
    ),
};
