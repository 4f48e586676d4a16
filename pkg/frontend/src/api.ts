/** Thin fetch wrapper around the labeling service endpoints.
 *
 * The fetch implementation is injectable so tests can run without a network
 * and the flow test can point at a throwaway server.
 */

import type {
  DatasetSummary,
  DecisionRecord,
  DecisionRequest,
  JobStatus,
  LabelJobRequest,
  SessionDetail,
  SessionFilter,
  SessionPage,
  Stats,
  UploadResult,
} from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  readonly code: string;
  readonly status: number;

  constructor(code: string, message: string, status: number) {
    super(message);
    this.name = "ApiError";
    this.code = code;
    this.status = status;
  }

  /** True when retrying the identical request may succeed later. */
  get retryable(): boolean {
    if (this.code === "network") return true;
    if (this.status >= 500) return true;
    return this.code === "dataset_busy";
  }
}

/** Session refs embed raw session ids, which contain "#". Encode the whole
 *  ref so the fragment separator survives the round trip. */
export function encodeRef(ref: string): string {
  return encodeURIComponent(ref);
}

export type ExportOptions = {
  extended?: boolean;
  force?: boolean;
};

export class ApiClient {
  private readonly fetchImpl: FetchLike;
  private readonly base: string;

  constructor(fetchImpl?: FetchLike, base = "") {
    this.fetchImpl = fetchImpl ?? ((input, init) => fetch(input, init));
    this.base = base;
  }

  private async raw(path: string, init?: RequestInit): Promise<Response> {
    let response: Response;
    try {
      response = await this.fetchImpl(this.base + path, init);
    } catch (error) {
      const detail = error instanceof Error ? error.message : "request failed";
      throw new ApiError("network", detail, 0);
    }
    if (!response.ok) {
      let code = "http_error";
      let message = `request failed with status ${response.status}`;
      try {
        const body = (await response.json()) as { code?: unknown; message?: unknown };
        if (typeof body.code === "string") code = body.code;
        if (typeof body.message === "string") message = body.message;
      } catch {
        // non-JSON error body, keep the generic message
      }
      throw new ApiError(code, message, response.status);
    }
    return response;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.raw(path, init);
    return (await response.json()) as T;
  }

  listDatasets(): Promise<{ datasets: DatasetSummary[] }> {
    return this.request("/api/datasets");
  }

  uploadDataset(
    file: Blob,
    filename: string,
    mapping: string,
    options: { name?: string; format?: string; policy?: string } = {},
  ): Promise<UploadResult> {
    const form = new FormData();
    form.append("file", file, filename);
    form.append("mapping", mapping);
    if (options.name !== undefined) form.append("name", options.name);
    if (options.format !== undefined) form.append("format", options.format);
    if (options.policy !== undefined) form.append("policy", options.policy);
    return this.request("/api/datasets", { method: "POST", body: form });
  }

  sessions(datasetId: string, filter: SessionFilter = "all", page = 1): Promise<SessionPage> {
    const query = new URLSearchParams({ filter, page: String(page) });
    return this.request(`/api/datasets/${datasetId}/sessions?${query}`);
  }

  session(ref: string): Promise<SessionDetail> {
    return this.request(`/api/sessions/${encodeRef(ref)}`);
  }

  postDecision(
    ref: string,
    eventIndex: number,
    decision: DecisionRequest,
  ): Promise<{ decision: DecisionRecord }> {
    return this.request(`/api/sessions/${encodeRef(ref)}/events/${eventIndex}/decision`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(decision),
    });
  }

  startLabelJob(datasetId: string, body: LabelJobRequest): Promise<{ job_id: string }> {
    return this.request(`/api/datasets/${datasetId}/label`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  job(jobId: string): Promise<JobStatus> {
    return this.request(`/api/jobs/${jobId}`);
  }

  /** Poll a labeling job until it leaves the running state. */
  async awaitJob(
    jobId: string,
    options: { intervalMs?: number; timeoutMs?: number; onProgress?: (status: JobStatus) => void } = {},
  ): Promise<JobStatus> {
    const interval = options.intervalMs ?? 250;
    const deadline = Date.now() + (options.timeoutMs ?? 60_000);
    for (;;) {
      const status = await this.job(jobId);
      options.onProgress?.(status);
      if (status.state !== "running") return status;
      if (Date.now() > deadline) throw new ApiError("timeout", `job ${jobId} still running`, 0);
      await new Promise((resolve) => setTimeout(resolve, interval));
    }
  }

  stats(datasetId: string): Promise<Stats> {
    return this.request(`/api/datasets/${datasetId}/stats`);
  }

  private exportPath(datasetId: string, options: ExportOptions): string {
    const query = new URLSearchParams();
    if (options.extended) query.set("extended", "true");
    if (options.force) query.set("force", "true");
    const suffix = query.size > 0 ? `?${query}` : "";
    return `/api/datasets/${datasetId}/export${suffix}`;
  }

  exportUrl(datasetId: string, options: ExportOptions = {}): string {
    return this.base + this.exportPath(datasetId, options);
  }

  async exportCsv(datasetId: string, options: ExportOptions = {}): Promise<string> {
    const response = await this.raw(this.exportPath(datasetId, options));
    return response.text();
  }
}
