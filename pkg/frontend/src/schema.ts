/**
 * The annotation payload schema, mirrored from the service so drafts can be
 * validated before they ever leave the browser.  A payload that passes
 * `validateAnnotationPayload` is accepted by POST /api/annotations (the
 * server enforces the same shape with a 422 on violation).
 */

export interface SegmentPayload {
  start_s: number;
  end_s: number;
}

export interface AnnotationPayload {
  song_id: string;
  annotator: "human" | "simulated";
  segments: SegmentPayload[];
}

export interface ValidationError {
  path: string;
  message: string;
}

export function validateAnnotationPayload(value: unknown): ValidationError[] {
  const errors: ValidationError[] = [];
  if (typeof value !== "object" || value === null || Array.isArray(value)) {
    return [{ path: "", message: "payload must be an object" }];
  }
  const doc = value as Record<string, unknown>;
  if (typeof doc.song_id !== "string" || doc.song_id.length === 0) {
    errors.push({ path: "song_id", message: "song_id must be a non-empty string" });
  }
  if (doc.annotator !== "human" && doc.annotator !== "simulated") {
    errors.push({
      path: "annotator",
      message: 'annotator must be "human" or "simulated"',
    });
  }
  if (!Array.isArray(doc.segments)) {
    errors.push({ path: "segments", message: "segments must be an array" });
    return errors;
  }
  doc.segments.forEach((seg, i) => {
    if (typeof seg !== "object" || seg === null) {
      errors.push({ path: `segments[${i}]`, message: "segment must be an object" });
      return;
    }
    for (const key of ["start_s", "end_s"] as const) {
      const v = (seg as Record<string, unknown>)[key];
      if (typeof v !== "number" || !Number.isFinite(v)) {
        errors.push({
          path: `segments[${i}].${key}`,
          message: `${key} must be a finite number`,
        });
      }
    }
  });
  return errors;
}

export function buildAnnotationPayload(
  songId: string,
  segments: { startS: number; endS: number }[],
): AnnotationPayload {
  return {
    song_id: songId,
    annotator: "human",
    segments: segments.map((s) => ({ start_s: s.startS, end_s: s.endS })),
  };
}
