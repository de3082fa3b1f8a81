import { describe, expect, it } from "vitest";
import {
  buildAnnotationPayload,
  validateAnnotationPayload,
} from "../src/schema.js";
import { makeDraft } from "../src/segments.js";

describe("buildAnnotationPayload", () => {
  it("produces the exact service schema", () => {
    const payload = buildAnnotationPayload("song_x", [
      makeDraft(2, 9),
      makeDraft(12, 20.5),
    ]);
    expect(Object.keys(payload).sort()).toEqual(
      ["annotator", "segments", "song_id"]);
    expect(payload.annotator).toBe("human");
    expect(payload.segments).toEqual([
      { start_s: 2, end_s: 9 },
      { start_s: 12, end_s: 20.5 },
    ]);
  });

  it("always validates against the schema checker", () => {
    for (const drafts of [[], [makeDraft(0, 5)], [makeDraft(1, 7), makeDraft(9, 30)]]) {
      const payload = buildAnnotationPayload("s", drafts);
      expect(validateAnnotationPayload(payload)).toEqual([]);
    }
  });
});

describe("validateAnnotationPayload", () => {
  it("rejects non-objects", () => {
    expect(validateAnnotationPayload(null)).not.toEqual([]);
    expect(validateAnnotationPayload([1, 2])).not.toEqual([]);
  });

  it("rejects a missing field the same way the service 422 would", () => {
    const errors = validateAnnotationPayload({
      song_id: "x",
      annotator: "human",
      segments: [{ start_s: 3.0 }],
    });
    expect(errors.some((e) => e.path === "segments[0].end_s")).toBe(true);
  });

  it("rejects unknown annotators", () => {
    const errors = validateAnnotationPayload({
      song_id: "x",
      annotator: "robot",
      segments: [],
    });
    expect(errors.some((e) => e.path === "annotator")).toBe(true);
  });

  it("rejects non-numeric timestamps", () => {
    const errors = validateAnnotationPayload({
      song_id: "x",
      annotator: "human",
      segments: [{ start_s: "zero", end_s: 4 }],
    });
    expect(errors.some((e) => e.path === "segments[0].start_s")).toBe(true);
  });
});
