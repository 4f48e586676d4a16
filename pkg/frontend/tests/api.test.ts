import { describe, expect, it } from "vitest";

import { ApiClient, ApiError, encodeRef } from "../src/api.js";
import { jsonResponse, recordingFetch } from "./helpers.js";

describe("encodeRef", () => {
  it("escapes the hash inside session ids", () => {
    expect(encodeRef("ds-1~u1#0")).toBe("ds-1~u1%230");
  });
});

describe("ApiClient urls", () => {
  it("fetches a session through the encoded ref", async () => {
    const { fetch, calls } = recordingFetch([
      jsonResponse(200, { ref: "ds-1~u1#0", dataset_id: "ds-1", session_id: "u1#0", user_id: "u1", events: [] }),
    ]);
    const client = new ApiClient(fetch);
    await client.session("ds-1~u1#0");
    expect(calls[0]?.url).toBe("/api/sessions/ds-1~u1%230");
  });

  it("prefixes every path with the base url", async () => {
    const { fetch, calls } = recordingFetch([jsonResponse(200, { datasets: [] })]);
    const client = new ApiClient(fetch, "http://127.0.0.1:9999");
    await client.listDatasets();
    expect(calls[0]?.url).toBe("http://127.0.0.1:9999/api/datasets");
  });

  it("builds session queries from filter and page", async () => {
    const { fetch, calls } = recordingFetch([
      jsonResponse(200, { sessions: [], page: 3, pages: 3, total: 120, page_size: 50 }),
    ]);
    await new ApiClient(fetch).sessions("ds-1", "undecided", 3);
    expect(calls[0]?.url).toBe("/api/datasets/ds-1/sessions?filter=undecided&page=3");
  });

  it("builds export urls with optional flags", () => {
    const client = new ApiClient(undefined, "http://h");
    expect(client.exportUrl("ds-1")).toBe("http://h/api/datasets/ds-1/export");
    expect(client.exportUrl("ds-1", { extended: true, force: true })).toBe(
      "http://h/api/datasets/ds-1/export?extended=true&force=true",
    );
  });
});

describe("ApiClient bodies", () => {
  it("posts decisions as json", async () => {
    const { fetch, calls } = recordingFetch([jsonResponse(200, { decision: {} })]);
    await new ApiClient(fetch).postDecision("ds-1~u1#0", 2, {
      label: "PoorScent",
      verdict: "corrected",
      note: "weak scent",
    });
    const call = calls[0];
    expect(call?.url).toBe("/api/sessions/ds-1~u1%230/events/2/decision");
    expect(call?.init?.method).toBe("POST");
    expect(JSON.parse(call?.init?.body as string)).toEqual({
      label: "PoorScent",
      verdict: "corrected",
      note: "weak scent",
    });
  });

  it("uploads multipart form data with mapping and name", async () => {
    const { fetch, calls } = recordingFetch([
      jsonResponse(200, { dataset_id: "ds-1", rejected_rows: 0, rejects: [] }),
    ]);
    const blob = new Blob(["uid,ts\n"], { type: "text/csv" });
    await new ApiClient(fetch).uploadDataset(blob, "log.csv", "{}", { name: "sample" });
    const body = calls[0]?.init?.body;
    expect(body).toBeInstanceOf(FormData);
    const form = body as FormData;
    expect(form.get("mapping")).toBe("{}");
    expect(form.get("name")).toBe("sample");
    expect(form.get("file")).toBeInstanceOf(Blob);
    expect(form.has("format")).toBe(false);
  });
});

describe("ApiClient errors", () => {
  it("maps structured error bodies to ApiError", async () => {
    const { fetch } = recordingFetch([
      jsonResponse(404, { code: "unknown_dataset", message: "no dataset ds-9" }),
    ]);
    const error = await new ApiClient(fetch).listDatasets().catch((e: unknown) => e);
    expect(error).toBeInstanceOf(ApiError);
    const apiError = error as ApiError;
    expect(apiError.code).toBe("unknown_dataset");
    expect(apiError.message).toBe("no dataset ds-9");
    expect(apiError.status).toBe(404);
    expect(apiError.retryable).toBe(false);
  });

  it("keeps a generic code when the error body is not json", async () => {
    const { fetch } = recordingFetch([new Response("boom", { status: 502 })]);
    const error = (await new ApiClient(fetch).listDatasets().catch((e: unknown) => e)) as ApiError;
    expect(error.code).toBe("http_error");
    expect(error.status).toBe(502);
    expect(error.retryable).toBe(true);
  });

  it("treats thrown fetches as retryable network errors", async () => {
    const { fetch } = recordingFetch([new TypeError("fetch failed")]);
    const error = (await new ApiClient(fetch).listDatasets().catch((e: unknown) => e)) as ApiError;
    expect(error.code).toBe("network");
    expect(error.status).toBe(0);
    expect(error.retryable).toBe(true);
  });

  it("marks a busy dataset as retryable", async () => {
    const { fetch } = recordingFetch([
      jsonResponse(409, { code: "dataset_busy", message: "labeling in progress" }),
    ]);
    const error = (await new ApiClient(fetch)
      .startLabelJob("ds-1", { engine: "heuristic" })
      .catch((e: unknown) => e)) as ApiError;
    expect(error.retryable).toBe(true);
  });

  it("does not retry unknown events", async () => {
    const { fetch } = recordingFetch([
      jsonResponse(409, { code: "unknown_event", message: "session 'u1#0' has no event 7" }),
    ]);
    const error = (await new ApiClient(fetch)
      .postDecision("ds~u1#0", 7, { label: "PoorScent", verdict: "corrected" })
      .catch((e: unknown) => e)) as ApiError;
    expect(error.retryable).toBe(false);
  });
});

describe("awaitJob", () => {
  it("polls until the job leaves the running state", async () => {
    const { fetch, calls } = recordingFetch([
      jsonResponse(200, { state: "running", done: 1, total: 3, error: null }),
      jsonResponse(200, { state: "running", done: 2, total: 3, error: null }),
      jsonResponse(200, { state: "done", done: 3, total: 3, error: null }),
    ]);
    const seen: number[] = [];
    const status = await new ApiClient(fetch).awaitJob("j1", {
      intervalMs: 1,
      onProgress: (s) => seen.push(s.done),
    });
    expect(status.state).toBe("done");
    expect(seen).toEqual([1, 2, 3]);
    expect(calls).toHaveLength(3);
    expect(calls[0]?.url).toBe("/api/jobs/j1");
  });
});
