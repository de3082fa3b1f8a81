/** Framewise SDR line chart: current vs previous model over song time. */

import type { FrameRow } from "./api.js";

export interface Series {
  label: string;
  color: string;
  frames: FrameRow[];
}

export interface ChartLayout {
  width: number;
  height: number;
  padLeft: number;
  padBottom: number;
}

export const DEFAULT_LAYOUT: ChartLayout = {
  width: 720,
  height: 220,
  padLeft: 42,
  padBottom: 22,
};

export function sdrRange(series: Series[]): [number, number] {
  let lo = Infinity;
  let hi = -Infinity;
  for (const s of series) {
    for (const f of s.frames) {
      if (f.sdr_db !== null) {
        lo = Math.min(lo, f.sdr_db);
        hi = Math.max(hi, f.sdr_db);
      }
    }
  }
  if (!Number.isFinite(lo)) {
    return [-1, 1];
  }
  const margin = Math.max(1, (hi - lo) * 0.1);
  return [lo - margin, hi + margin];
}

export function drawSdrChart(
  ctx: CanvasRenderingContext2D,
  series: Series[],
  frameS: number,
  layout: ChartLayout = DEFAULT_LAYOUT,
): void {
  const { width, height, padLeft, padBottom } = layout;
  const plotW = width - padLeft - 8;
  const plotH = height - padBottom - 8;
  const [lo, hi] = sdrRange(series);
  const nFrames = Math.max(...series.map((s) => s.frames.length), 1);

  ctx.fillStyle = "#16191d";
  ctx.fillRect(0, 0, width, height);
  ctx.strokeStyle = "#444";
  ctx.strokeRect(padLeft, 8, plotW, plotH);

  const y = (v: number) => 8 + plotH - ((v - lo) / (hi - lo)) * plotH;
  const x = (i: number) => padLeft + (i / Math.max(nFrames - 1, 1)) * plotW;

  // zero-dB guide and axis labels
  if (lo < 0 && hi > 0) {
    ctx.strokeStyle = "#666";
    ctx.beginPath();
    ctx.moveTo(padLeft, y(0));
    ctx.lineTo(padLeft + plotW, y(0));
    ctx.stroke();
  }
  ctx.fillStyle = "#aaa";
  ctx.font = "11px sans-serif";
  ctx.fillText(`${hi.toFixed(0)} dB`, 2, y(hi) + 4);
  ctx.fillText(`${lo.toFixed(0)} dB`, 2, y(lo) + 4);
  ctx.fillText(`${((nFrames - 1) * frameS).toFixed(0)} s`, width - 30, height - 6);

  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    let pen = false;
    s.frames.forEach((f, i) => {
      if (f.sdr_db === null) {
        pen = false; // excluded frame: break the line
        return;
      }
      if (pen) {
        ctx.lineTo(x(i), y(f.sdr_db));
      } else {
        ctx.moveTo(x(i), y(f.sdr_db));
        pen = true;
      }
    });
    ctx.stroke();
  }
}
