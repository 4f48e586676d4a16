/** Shared test scaffolding: canned responses and record factories. */

import type { FetchLike } from "../src/api.js";
import type { DecisionRecord, EventView, SessionDetail, TranscriptRecord } from "../src/types.js";

export function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

export type RecordedCall = { url: string; init: RequestInit | undefined };

/** A fetch stub that records calls and replays queued responses in order. */
export function recordingFetch(responses: (Response | Error)[]): {
  fetch: FetchLike;
  calls: RecordedCall[];
} {
  const calls: RecordedCall[] = [];
  const fetchImpl: FetchLike = async (url, init) => {
    calls.push({ url, init });
    const next = responses.shift();
    if (next === undefined) throw new Error(`unexpected request: ${url}`);
    if (next instanceof Error) throw next;
    return next;
  };
  return { fetch: fetchImpl, calls };
}

export function makeEvent(overrides: Partial<EventView> = {}): EventView {
  return {
    session_id: "u1#0",
    index: 0,
    timestamp: 1000,
    action: "QUERY",
    content: "best espresso machine under $500",
    content_id: null,
    answer_present: false,
    dwell_ms: null,
    label: "FollowingScent",
    source: "agents",
    confidence: 1.0,
    flagged: false,
    justification: null,
    decision: null,
    transcript: null,
    ...overrides,
  };
}

export function makeTranscript(overrides: Partial<TranscriptRecord> = {}): TranscriptRecord {
  return {
    session_id: "u1#0",
    event_index: 0,
    analyst_label: "FollowingScent",
    analyst_justification: "first query opens a patch",
    critic_agrees: true,
    critic_label: null,
    critic_justification: "the proposed label matches the behavioral evidence",
    judge_label: "FollowingScent",
    judge_justification: "both agents agree: first query opens a patch",
    disagreement: 0.0,
    ...overrides,
  };
}

export function makeDecision(overrides: Partial<DecisionRecord> = {}): DecisionRecord {
  return {
    session_id: "u1#0",
    event_index: 0,
    label: "DietEnrichment",
    verdict: "corrected",
    decided_at: 1_700_000_000_000,
    note: null,
    ...overrides,
  };
}

export function makeDetail(ref: string, events: EventView[]): SessionDetail {
  const [datasetId = "ds-test"] = ref.split("~", 1);
  return {
    ref,
    dataset_id: datasetId,
    session_id: events[0]?.session_id ?? "u1#0",
    user_id: "u1",
    events,
  };
}
