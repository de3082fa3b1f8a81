import { describe, expect, it } from "vitest";
import {
  TimeScale,
  applyDrag,
  dropWarning,
  hitTest,
  makeDraft,
  previewNormalize,
} from "../src/segments.js";

describe("dropWarning", () => {
  it("flags a 5 s draft for removal", () => {
    const warning = dropWarning({ startS: 10, endS: 15 });
    expect(warning).toContain("below 6 s minimum");
    expect(warning).toContain("dropped");
  });

  it("keeps a 6 s draft quiet", () => {
    expect(dropWarning({ startS: 10, endS: 16 })).toBeNull();
  });
});

describe("previewNormalize", () => {
  it("mirrors the server: short segments drop with a reason", () => {
    const groups = previewNormalize([makeDraft(10, 15.9)], 60);
    expect(groups).toHaveLength(1);
    expect(groups[0].kept).toBe(false);
    expect(groups[0].reason).toContain("below 6 s");
  });

  it("merges overlapping drafts into one kept group", () => {
    const a = makeDraft(10, 14);
    const b = makeDraft(13.5, 17);
    const groups = previewNormalize([a, b], 60);
    expect(groups).toHaveLength(1);
    expect(groups[0].startS).toBeCloseTo(10);
    expect(groups[0].endS).toBeCloseTo(17);
    expect(groups[0].kept).toBe(true);
    expect(groups[0].memberIds.sort()).toEqual([a.id, b.id].sort());
  });

  it("merges near-touching drafts across the 0.1 s gap", () => {
    const groups = previewNormalize([makeDraft(1, 4), makeDraft(4.05, 8)], 60);
    expect(groups).toHaveLength(1);
    expect(groups[0].endS - groups[0].startS).toBeCloseTo(7);
  });

  it("clamps to the song and discards empty results", () => {
    const groups = previewNormalize(
      [makeDraft(-3, 2), makeDraft(70, 80)],
      60,
    );
    expect(groups).toHaveLength(1);
    expect(groups[0].startS).toBe(0);
  });

  it("is idempotent on its own kept output", () => {
    const first = previewNormalize(
      [makeDraft(2, 9), makeDraft(8.5, 16), makeDraft(30, 33)],
      60,
    );
    const kept = first.filter((g) => g.kept);
    const again = previewNormalize(
      kept.map((g) => makeDraft(g.startS, g.endS)),
      60,
    );
    expect(again.filter((g) => g.kept).map((g) => [g.startS, g.endS]))
      .toEqual(kept.map((g) => [g.startS, g.endS]));
  });
});

describe("TimeScale", () => {
  it("round-trips within one pixel", () => {
    const scale = new TimeScale(30, 600);
    for (const x of [0, 17, 299.5, 600]) {
      expect(Math.abs(scale.timeToPx(scale.pxToTime(x)) - x)).toBeLessThan(1);
    }
  });

  it("maps segment coordinates consistently with frame times", () => {
    const scale = new TimeScale(30, 600); // 20 px per second
    expect(scale.timeToPx(6)).toBeCloseTo(120);
    expect(scale.pxToTime(120)).toBeCloseTo(6);
  });
});

describe("drag interactions", () => {
  it("hit-tests edges before bodies", () => {
    const d = makeDraft(10, 16);
    expect(hitTest([d], 10.1, 0.25).mode).toBe("resize-start");
    expect(hitTest([d], 15.9, 0.25).mode).toBe("resize-end");
    expect(hitTest([d], 13, 0.25).mode).toBe("move");
    expect(hitTest([d], 20, 0.25).mode).toBe("create");
  });

  it("moves preserve width and clamp to the song", () => {
    const d = makeDraft(10, 16);
    const moved = applyDrag(d, "move", 13, 28, 30);
    expect(moved.endS - moved.startS).toBeCloseTo(6);
    expect(moved.endS).toBeLessThanOrEqual(30);
  });

  it("resizes never invert the segment", () => {
    const d = makeDraft(10, 16);
    const shrunk = applyDrag(d, "resize-end", 16, 9, 30);
    expect(shrunk.endS).toBeGreaterThan(shrunk.startS);
  });
});
