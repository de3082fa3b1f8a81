/** Canvas waveform rendering from server-computed min/max peak columns,
 * plus segment overlays and the playback cursor. */

import type { Draft } from "./segments.js";
import { TimeScale, dropWarning } from "./segments.js";

export interface WaveformStyle {
  wave: string;
  background: string;
  draftFill: string;
  draftWarnFill: string;
  submittedFill: string;
  cursor: string;
}

export const DEFAULT_STYLE: WaveformStyle = {
  wave: "#4a90b8",
  background: "#16191d",
  draftFill: "rgba(235, 183, 52, 0.35)",
  draftWarnFill: "rgba(235, 88, 52, 0.45)",
  submittedFill: "rgba(82, 196, 118, 0.30)",
  cursor: "#ffffff",
};

export function drawPeaks(
  ctx: CanvasRenderingContext2D,
  peaks: [number, number][],
  width: number,
  height: number,
  style: WaveformStyle = DEFAULT_STYLE,
): void {
  ctx.fillStyle = style.background;
  ctx.fillRect(0, 0, width, height);
  ctx.fillStyle = style.wave;
  const mid = height / 2;
  const columns = Math.min(peaks.length, width);
  for (let x = 0; x < columns; x += 1) {
    const src = Math.floor((x / width) * peaks.length);
    const [lo, hi] = peaks[src];
    const y0 = mid - hi * mid;
    const y1 = mid - lo * mid;
    ctx.fillRect(x, y0, 1, Math.max(1, y1 - y0));
  }
}

export function drawSegments(
  ctx: CanvasRenderingContext2D,
  drafts: Draft[],
  submitted: { startS: number; endS: number }[],
  scale: TimeScale,
  height: number,
  style: WaveformStyle = DEFAULT_STYLE,
): void {
  for (const seg of submitted) {
    const x0 = scale.timeToPx(seg.startS);
    const x1 = scale.timeToPx(seg.endS);
    ctx.fillStyle = style.submittedFill;
    ctx.fillRect(x0, 0, x1 - x0, height);
  }
  for (const d of drafts) {
    const x0 = scale.timeToPx(d.startS);
    const x1 = scale.timeToPx(d.endS);
    ctx.fillStyle = dropWarning(d) ? style.draftWarnFill : style.draftFill;
    ctx.fillRect(x0, 0, x1 - x0, height);
    ctx.fillStyle = "rgba(255,255,255,0.8)";
    ctx.fillRect(x0, 0, 1, height);
    ctx.fillRect(x1 - 1, 0, 1, height);
  }
}

export function drawCursor(
  ctx: CanvasRenderingContext2D,
  tS: number,
  scale: TimeScale,
  height: number,
  style: WaveformStyle = DEFAULT_STYLE,
): void {
  const x = scale.timeToPx(tS);
  ctx.fillStyle = style.cursor;
  ctx.fillRect(x, 0, 1, height);
}
