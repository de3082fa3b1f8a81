import { describe, expect, it, vi } from "vitest";
import { Job, pollJob } from "../src/jobs.js";

function jobSequence(states: Job["state"][], kind = "adapt"): {
  fetchJob: (id: string) => Promise<Job>;
  calls: () => number;
} {
  let i = 0;
  return {
    fetchJob: async (job_id: string) => {
      const state = states[Math.min(i, states.length - 1)];
      i += 1;
      return {
        job_id,
        kind,
        state,
        progress: state === "done" ? 1 : i / states.length,
        result_ref: state === "done" ? "ckpt-001.bin" : null,
        error_message: state === "failed" ? "exploded" : null,
        detail: null,
      };
    },
    calls: () => i,
  };
}

describe("pollJob", () => {
  it("resolves once the job is done", async () => {
    const seq = jobSequence(["queued", "running", "running", "done"]);
    const job = await pollJob(seq.fetchJob, "j1", { intervalMs: 1 });
    expect(job.state).toBe("done");
    expect(job.result_ref).toBe("ckpt-001.bin");
    expect(seq.calls()).toBe(4);
  });

  it("rejects with the error message on failure", async () => {
    const seq = jobSequence(["queued", "failed"]);
    await expect(pollJob(seq.fetchJob, "j2", { intervalMs: 1 }))
      .rejects.toThrow("exploded");
  });

  it("reports every observed update in order", async () => {
    const seq = jobSequence(["queued", "running", "done"]);
    const seen: string[] = [];
    await pollJob(seq.fetchJob, "j3", {
      intervalMs: 1,
      onUpdate: (j) => seen.push(j.state),
    });
    expect(seen).toEqual(["queued", "running", "done"]);
  });

  it("progress reported to the callback never decreases", async () => {
    const seq = jobSequence(["queued", "running", "running", "done"]);
    const values: number[] = [];
    await pollJob(seq.fetchJob, "j4", {
      intervalMs: 1,
      onUpdate: (j) => values.push(j.progress),
    });
    for (let i = 1; i < values.length; i += 1) {
      expect(values[i]).toBeGreaterThanOrEqual(values[i - 1]);
    }
  });

  it("times out if the job never settles", async () => {
    const seq = jobSequence(["running"]);
    await expect(
      pollJob(seq.fetchJob, "j5", { intervalMs: 1, timeoutMs: 15 }),
    ).rejects.toThrow("timed out");
  });
});
