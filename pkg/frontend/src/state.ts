/** Application state: a single store plus the decision outbox.
 *
 * Decisions are applied optimistically. A server rejection rolls the event
 * back and surfaces a toast; a connectivity failure keeps the decision in a
 * persisted outbox so nothing is lost across reloads. Everything else is
 * rebuilt from the API on boot.
 */

import { ApiClient, ApiError } from "./api.js";
import type {
  DatasetSummary,
  DecisionRecord,
  DecisionRequest,
  EventView,
  JobStatus,
  SessionDetail,
  SessionFilter,
  SessionPage,
  Stats,
} from "./types.js";

export type View =
  | { kind: "datasets" }
  | { kind: "upload" }
  | { kind: "sessions"; datasetId: string; filter: SessionFilter; page: number }
  | { kind: "queue"; datasetId: string }
  | { kind: "timeline"; ref: string };

export type Toast = {
  id: number;
  code: string;
  message: string;
  retryable: boolean;
};

export type QueueState = {
  datasetId: string;
  refs: string[];
  refPos: number;
  order: number[];
  cursor: number;
  exhausted: boolean;
};

export type JobView = {
  jobId: string;
  datasetId: string;
  status: JobStatus;
};

export type AppState = {
  view: View;
  datasets: DatasetSummary[];
  sessionPage: SessionPage | null;
  detail: SessionDetail | null;
  stats: Stats | null;
  queue: QueueState | null;
  toasts: Toast[];
  pendingCount: number;
  job: JobView | null;
  busy: boolean;
};

export function initialState(): AppState {
  return {
    view: { kind: "datasets" },
    datasets: [],
    sessionPage: null,
    detail: null,
    stats: null,
    queue: null,
    toasts: [],
    pendingCount: 0,
    job: null,
    busy: false,
  };
}

export type Listener = (state: AppState) => void;

export class Store {
  private state: AppState;
  private readonly listeners = new Set<Listener>();

  constructor(initial?: Partial<AppState>) {
    this.state = { ...initialState(), ...initial };
  }

  get(): AppState {
    return this.state;
  }

  patch(partial: Partial<AppState>): void {
    this.state = { ...this.state, ...partial };
    for (const listener of this.listeners) listener(this.state);
  }

  subscribe(listener: Listener): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }
}

let toastCounter = 0;

export function pushToast(store: Store, code: string, message: string, retryable = false): number {
  const id = ++toastCounter;
  const toast: Toast = { id, code, message, retryable };
  store.patch({ toasts: [...store.get().toasts, toast] });
  return id;
}

export function dismissToast(store: Store, id: number): void {
  store.patch({ toasts: store.get().toasts.filter((toast) => toast.id !== id) });
}

export function toastError(store: Store, error: unknown): void {
  if (error instanceof ApiError) {
    pushToast(store, error.code, error.message, error.retryable);
  } else {
    const message = error instanceof Error ? error.message : String(error);
    pushToast(store, "internal_error", message);
  }
}

export type PendingDecision = {
  ref: string;
  eventIndex: number;
  body: DecisionRequest;
  queuedAt: number;
};

export type KeyValueStore = {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
};

/** In-memory stand-in used when localStorage is unavailable. */
export function memoryStorage(): KeyValueStore {
  const bag = new Map<string, string>();
  return {
    getItem: (key) => bag.get(key) ?? null,
    setItem: (key, value) => void bag.set(key, value),
    removeItem: (key) => void bag.delete(key),
  };
}

const PENDING_KEY = "forager.pending-decisions";

export type FlushReport = {
  sent: number;
  kept: number;
  dropped: PendingDecision[];
};

/** Persisted queue of decisions the server has not yet acknowledged. */
export class DecisionOutbox {
  private items: PendingDecision[];

  constructor(private readonly storage: KeyValueStore) {
    this.items = this.restore();
  }

  private restore(): PendingDecision[] {
    const raw = this.storage.getItem(PENDING_KEY);
    if (raw === null) return [];
    try {
      const parsed = JSON.parse(raw) as unknown;
      return Array.isArray(parsed) ? (parsed as PendingDecision[]) : [];
    } catch {
      return [];
    }
  }

  private persist(): void {
    if (this.items.length === 0) {
      this.storage.removeItem(PENDING_KEY);
    } else {
      this.storage.setItem(PENDING_KEY, JSON.stringify(this.items));
    }
  }

  get size(): number {
    return this.items.length;
  }

  list(): readonly PendingDecision[] {
    return this.items;
  }

  /** Queue a decision; a newer decision for the same event replaces the old. */
  push(item: PendingDecision): void {
    this.items = this.items.filter(
      (existing) => existing.ref !== item.ref || existing.eventIndex !== item.eventIndex,
    );
    this.items.push(item);
    this.persist();
  }

  /** Post every queued decision. Decisions that still cannot reach the
   *  server stay queued; ones the server rejects outright are returned so
   *  the caller can surface them, never silently discarded. */
  async flush(client: ApiClient): Promise<FlushReport> {
    const kept: PendingDecision[] = [];
    const dropped: PendingDecision[] = [];
    let sent = 0;
    for (const item of this.items) {
      try {
        await client.postDecision(item.ref, item.eventIndex, item.body);
        sent += 1;
      } catch (error) {
        if (error instanceof ApiError && error.retryable) {
          kept.push(item);
        } else {
          dropped.push(item);
        }
      }
    }
    this.items = kept;
    this.persist();
    return { sent, kept: kept.length, dropped };
  }
}

function replaceEvent(detail: SessionDetail, index: number, event: EventView): SessionDetail {
  return {
    ...detail,
    events: detail.events.map((existing) => (existing.index === index ? event : existing)),
  };
}

function eventAt(detail: SessionDetail, index: number): EventView | undefined {
  return detail.events.find((event) => event.index === index);
}

export type DecideOutcome = "confirmed" | "queued" | "rolled-back";

/** Record a reviewer decision for one event.
 *
 * The loaded timeline updates immediately so keyboard review stays fast.
 * The flagged badge only clears once the server confirms; on rejection the
 * event snaps back to its previous state.
 */
export async function decide(
  store: Store,
  client: ApiClient,
  outbox: DecisionOutbox,
  ref: string,
  eventIndex: number,
  body: DecisionRequest,
): Promise<DecideOutcome> {
  const before = store.get().detail;
  const snapshot = before && before.ref === ref ? eventAt(before, eventIndex) : undefined;

  if (before && snapshot) {
    const optimistic: EventView = {
      ...snapshot,
      label: body.label,
      source: "human",
      decision: {
        session_id: snapshot.session_id,
        event_index: eventIndex,
        label: body.label,
        verdict: body.verdict,
        decided_at: Date.now(),
        note: body.note ?? null,
      },
    };
    store.patch({ detail: replaceEvent(before, eventIndex, optimistic) });
  }

  try {
    const confirmed = await client.postDecision(ref, eventIndex, body);
    applyConfirmed(store, ref, eventIndex, confirmed.decision);
    return "confirmed";
  } catch (error) {
    if (error instanceof ApiError && error.retryable) {
      outbox.push({ ref, eventIndex, body, queuedAt: Date.now() });
      store.patch({ pendingCount: outbox.size });
      pushToast(store, error.code, `decision queued locally: ${error.message}`, true);
      return "queued";
    }
    const current = store.get().detail;
    if (current && current.ref === ref && snapshot) {
      store.patch({ detail: replaceEvent(current, eventIndex, snapshot) });
    }
    toastError(store, error);
    return "rolled-back";
  }
}

function applyConfirmed(store: Store, ref: string, eventIndex: number, decision: DecisionRecord): void {
  const detail = store.get().detail;
  if (!detail || detail.ref !== ref) return;
  const event = eventAt(detail, eventIndex);
  if (!event) return;
  const confirmed: EventView = {
    ...event,
    label: decision.label,
    source: "human",
    confidence: 1.0,
    flagged: false,
    decision,
  };
  store.patch({ detail: replaceEvent(detail, eventIndex, confirmed) });
}

/** Drain the outbox and report what happened. Rejected decisions surface as
 *  toasts so the reviewer can redo them by hand. */
export async function flushOutbox(store: Store, client: ApiClient, outbox: DecisionOutbox): Promise<FlushReport> {
  const report = await outbox.flush(client);
  store.patch({ pendingCount: outbox.size });
  if (report.sent > 0) {
    pushToast(store, "outbox", `sent ${report.sent} queued decision${report.sent === 1 ? "" : "s"}`);
  }
  for (const item of report.dropped) {
    pushToast(
      store,
      "rejected",
      `queued decision for ${item.ref} event ${item.eventIndex} was rejected by the server`,
    );
  }
  if (report.kept > 0) {
    pushToast(store, "outbox", `${report.kept} decision${report.kept === 1 ? "" : "s"} still waiting to send`, true);
  }
  return report;
}
