/**
 * Draft segment model for the annotation timeline.
 *
 * The preview logic mirrors the server's normalization (clamp to the song,
 * merge marks closer than 0.1 s, keep only runs of 6 s and up) so the badge
 * a user sees before submitting matches what the service will actually do.
 */

export const MIN_SEGMENT_S = 6.0;
export const MERGE_GAP_S = 0.1;

export interface Draft {
  id: number;
  startS: number;
  endS: number;
}

export interface PreviewGroup {
  startS: number;
  endS: number;
  memberIds: number[];
  kept: boolean;
  reason: string | null;
}

let nextId = 1;

export function makeDraft(startS: number, endS: number): Draft {
  return { id: nextId++, startS: Math.min(startS, endS), endS: Math.max(startS, endS) };
}

export function durationS(d: { startS: number; endS: number }): number {
  return d.endS - d.startS;
}

/** Badge text shown on a draft that the 6 s rule would remove. */
export function dropWarning(d: { startS: number; endS: number }): string | null {
  if (durationS(d) >= MIN_SEGMENT_S) {
    return null;
  }
  return `below ${MIN_SEGMENT_S} s minimum - will be dropped`;
}

/** Server-faithful preview of what normalization will keep. */
export function previewNormalize(drafts: Draft[], songDurationS: number): PreviewGroup[] {
  const clamped = drafts
    .map((d) => ({
      id: d.id,
      startS: Math.min(Math.max(d.startS, 0), songDurationS),
      endS: Math.min(Math.max(d.endS, 0), songDurationS),
    }))
    .filter((d) => d.startS < d.endS)
    .sort((a, b) => a.startS - b.startS);

  const groups: PreviewGroup[] = [];
  for (const d of clamped) {
    const last = groups[groups.length - 1];
    if (last && d.startS < last.endS + MERGE_GAP_S) {
      last.endS = Math.max(last.endS, d.endS);
      last.memberIds.push(d.id);
    } else {
      groups.push({
        startS: d.startS,
        endS: d.endS,
        memberIds: [d.id],
        kept: false,
        reason: null,
      });
    }
  }
  for (const g of groups) {
    if (durationS(g) >= MIN_SEGMENT_S) {
      g.kept = true;
    } else {
      g.kept = false;
      g.reason = dropWarning(g);
    }
  }
  return groups;
}

/** Timeline coordinate mapping; one column of peaks per pixel. */
export class TimeScale {
  constructor(
    public readonly durationS: number,
    public readonly widthPx: number,
  ) {}

  timeToPx(t: number): number {
    return (t / this.durationS) * this.widthPx;
  }

  pxToTime(x: number): number {
    return (x / this.widthPx) * this.durationS;
  }
}

export type DragMode = "create" | "move" | "resize-start" | "resize-end";

/** Which interaction a pointer-down at `t` seconds starts. */
export function hitTest(
  drafts: Draft[],
  t: number,
  edgeToleranceS: number,
): { mode: DragMode; draft: Draft | null } {
  for (const d of drafts) {
    if (Math.abs(t - d.startS) <= edgeToleranceS) {
      return { mode: "resize-start", draft: d };
    }
    if (Math.abs(t - d.endS) <= edgeToleranceS) {
      return { mode: "resize-end", draft: d };
    }
  }
  for (const d of drafts) {
    if (t > d.startS && t < d.endS) {
      return { mode: "move", draft: d };
    }
  }
  return { mode: "create", draft: null };
}

export function applyDrag(
  d: Draft,
  mode: DragMode,
  fromS: number,
  toS: number,
  songDurationS: number,
): Draft {
  const delta = toS - fromS;
  let startS = d.startS;
  let endS = d.endS;
  if (mode === "move") {
    const width = endS - startS;
    startS = Math.min(Math.max(startS + delta, 0), songDurationS - width);
    endS = startS + width;
  } else if (mode === "resize-start") {
    startS = Math.min(Math.max(d.startS + delta, 0), endS - 0.05);
  } else if (mode === "resize-end") {
    endS = Math.max(Math.min(d.endS + delta, songDurationS), startS + 0.05);
  }
  return { id: d.id, startS, endS };
}
