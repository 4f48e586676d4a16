import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import {
  DecisionOutbox,
  Store,
  decide,
  dismissToast,
  flushOutbox,
  memoryStorage,
  pushToast,
} from "../src/state.js";
import { jsonResponse, makeDecision, makeDetail, makeEvent, recordingFetch } from "./helpers.js";

describe("Store", () => {
  it("notifies subscribers on patch", () => {
    const store = new Store();
    const seen: number[] = [];
    const unsubscribe = store.subscribe((state) => seen.push(state.toasts.length));
    pushToast(store, "x", "one");
    pushToast(store, "x", "two");
    unsubscribe();
    pushToast(store, "x", "three");
    expect(seen).toEqual([1, 2]);
    expect(store.get().toasts).toHaveLength(3);
  });

  it("dismisses toasts by id", () => {
    const store = new Store();
    const id = pushToast(store, "oops", "gone soon");
    pushToast(store, "keep", "stays");
    dismissToast(store, id);
    expect(store.get().toasts.map((t) => t.code)).toEqual(["keep"]);
  });
});

describe("DecisionOutbox", () => {
  it("persists across instances sharing the same storage", () => {
    const storage = memoryStorage();
    const first = new DecisionOutbox(storage);
    first.push({ ref: "ds~u1#0", eventIndex: 0, body: { label: "PoorScent", verdict: "corrected" }, queuedAt: 1 });
    const second = new DecisionOutbox(storage);
    expect(second.size).toBe(1);
    expect(second.list()[0]?.ref).toBe("ds~u1#0");
  });

  it("replaces an older decision for the same event", () => {
    const outbox = new DecisionOutbox(memoryStorage());
    outbox.push({ ref: "ds~u1#0", eventIndex: 0, body: { label: "PoorScent", verdict: "corrected" }, queuedAt: 1 });
    outbox.push({ ref: "ds~u1#0", eventIndex: 0, body: { label: "LeavingPatch", verdict: "corrected" }, queuedAt: 2 });
    outbox.push({ ref: "ds~u1#0", eventIndex: 1, body: { label: "PoorScent", verdict: "accepted" }, queuedAt: 3 });
    expect(outbox.size).toBe(2);
    expect(outbox.list()[0]?.body.label).toBe("LeavingPatch");
  });

  it("survives corrupt storage", () => {
    const storage = memoryStorage();
    storage.setItem("forager.pending-decisions", "{nope");
    expect(new DecisionOutbox(storage).size).toBe(0);
  });
});

const REF = "ds-test~u1#0";

function flaggedDetailStore(): Store {
  const detail = makeDetail(REF, [
    makeEvent({ index: 0, flagged: true }),
    makeEvent({ index: 1, timestamp: 5000, action: "CLICK", label: "ApproachingSource" }),
  ]);
  return new Store({ detail, view: { kind: "timeline", ref: REF } });
}

describe("decide", () => {
  it("applies optimistically but clears the flag only on confirmation", async () => {
    let release: (response: Response) => void = () => {};
    const gate = new Promise<Response>((resolve) => {
      release = resolve;
    });
    const client = new ApiClient(() => gate);
    const store = flaggedDetailStore();
    const outbox = new DecisionOutbox(memoryStorage());

    const pending = decide(store, client, outbox, REF, 0, { label: "DietEnrichment", verdict: "corrected" });
    const during = store.get().detail?.events[0];
    expect(during?.label).toBe("DietEnrichment");
    expect(during?.decision?.verdict).toBe("corrected");
    expect(during?.flagged).toBe(true);

    release(jsonResponse(200, { decision: makeDecision({ note: null }) }));
    expect(await pending).toBe("confirmed");
    const after = store.get().detail?.events[0];
    expect(after?.flagged).toBe(false);
    expect(after?.source).toBe("human");
    expect(after?.decision?.decided_at).toBe(1_700_000_000_000);
  });

  it("rolls back and toasts when the server rejects the decision", async () => {
    const { fetch } = recordingFetch([
      jsonResponse(400, { code: "invalid_request", message: "corrected verdict must change the machine label" }),
    ]);
    const store = flaggedDetailStore();
    const outbox = new DecisionOutbox(memoryStorage());
    const outcome = await decide(store, new ApiClient(fetch), outbox, REF, 0, {
      label: "FollowingScent",
      verdict: "corrected",
    });
    expect(outcome).toBe("rolled-back");
    const event = store.get().detail?.events[0];
    expect(event?.decision).toBeNull();
    expect(event?.flagged).toBe(true);
    expect(event?.label).toBe("FollowingScent");
    expect(outbox.size).toBe(0);
    const toast = store.get().toasts[0];
    expect(toast?.code).toBe("invalid_request");
    expect(toast?.retryable).toBe(false);
  });

  it("queues the decision locally when the server is unreachable", async () => {
    const { fetch } = recordingFetch([new TypeError("fetch failed")]);
    const store = flaggedDetailStore();
    const storage = memoryStorage();
    const outbox = new DecisionOutbox(storage);
    const outcome = await decide(store, new ApiClient(fetch), outbox, REF, 0, {
      label: "DietEnrichment",
      verdict: "corrected",
    });
    expect(outcome).toBe("queued");
    expect(outbox.size).toBe(1);
    expect(store.get().pendingCount).toBe(1);
    expect(store.get().toasts[0]?.retryable).toBe(true);
    expect(store.get().detail?.events[0]?.label).toBe("DietEnrichment");
    expect(storage.getItem("forager.pending-decisions")).toContain("DietEnrichment");
  });
});

describe("flushOutbox", () => {
  it("sends queued decisions once the server is back", async () => {
    const storage = memoryStorage();
    const outbox = new DecisionOutbox(storage);
    outbox.push({ ref: REF, eventIndex: 0, body: { label: "DietEnrichment", verdict: "corrected" }, queuedAt: 1 });

    const store = new Store();
    store.patch({ pendingCount: outbox.size });
    const { fetch, calls } = recordingFetch([jsonResponse(200, { decision: makeDecision() })]);
    const report = await flushOutbox(store, new ApiClient(fetch), outbox);

    expect(report).toEqual({ sent: 1, kept: 0, dropped: [] });
    expect(outbox.size).toBe(0);
    expect(store.get().pendingCount).toBe(0);
    expect(storage.getItem("forager.pending-decisions")).toBeNull();
    expect(calls[0]?.url).toBe("/api/sessions/ds-test~u1%230/events/0/decision");
    expect(store.get().toasts.map((t) => t.code)).toEqual(["outbox"]);
  });

  it("keeps decisions the server still cannot take", async () => {
    const outbox = new DecisionOutbox(memoryStorage());
    outbox.push({ ref: REF, eventIndex: 0, body: { label: "PoorScent", verdict: "corrected" }, queuedAt: 1 });
    const { fetch } = recordingFetch([new TypeError("still down")]);
    const store = new Store();
    const report = await flushOutbox(store, new ApiClient(fetch), outbox);
    expect(report.kept).toBe(1);
    expect(outbox.size).toBe(1);
    expect(store.get().toasts.at(-1)?.retryable).toBe(true);
  });

  it("surfaces decisions the server rejected outright", async () => {
    const outbox = new DecisionOutbox(memoryStorage());
    outbox.push({ ref: REF, eventIndex: 9, body: { label: "PoorScent", verdict: "corrected" }, queuedAt: 1 });
    const { fetch } = recordingFetch([
      jsonResponse(409, { code: "unknown_event", message: "session 'u1#0' has no event 9" }),
    ]);
    const store = new Store();
    const report = await flushOutbox(store, new ApiClient(fetch), outbox);
    expect(report.dropped).toHaveLength(1);
    expect(outbox.size).toBe(0);
    const toast = store.get().toasts[0];
    expect(toast?.code).toBe("rejected");
    expect(toast?.message).toContain("event 9");
  });
});
