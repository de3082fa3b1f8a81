/** Polling helper for long-running service jobs. */

export interface Job {
  job_id: string;
  kind: string;
  state: "queued" | "running" | "done" | "failed";
  progress: number;
  result_ref: string | null;
  error_message: string | null;
  detail: string | null;
}

export type FetchJob = (jobId: string) => Promise<Job>;

export interface PollOptions {
  intervalMs?: number;
  onUpdate?: (job: Job) => void;
  timeoutMs?: number;
}

const sleep = (ms: number) => new Promise<void>((r) => setTimeout(r, ms));

/**
 * Poll one job until it settles.  Resolves with the final job on "done",
 * rejects with its error message on "failed" or after `timeoutMs`.
 */
export async function pollJob(
  fetchJob: FetchJob,
  jobId: string,
  opts: PollOptions = {},
): Promise<Job> {
  const interval = opts.intervalMs ?? 1000;
  const deadline = opts.timeoutMs ? Date.now() + opts.timeoutMs : null;
  for (;;) {
    const job = await fetchJob(jobId);
    opts.onUpdate?.(job);
    if (job.state === "done") {
      return job;
    }
    if (job.state === "failed") {
      throw new Error(job.error_message ?? `job ${jobId} failed`);
    }
    if (deadline !== null && Date.now() >= deadline) {
      throw new Error(`job ${jobId} timed out`);
    }
    await sleep(interval);
  }
}
