/** Review queue over a dataset's sessions.
 *
 * Sessions come from the undecided filter (open flags, no human decision
 * yet). Within a session, flagged events come first so the reviewer burns
 * down the disagreement queue before sweeping the rest.
 */

import { ApiClient } from "./api.js";
import {
  DecisionOutbox,
  Store,
  QueueState,
  decide,
  toastError,
  type DecideOutcome,
} from "./state.js";
import { LABELS, type DecisionRequest, type DecisionVerdict, type EventView, type SessionDetail } from "./types.js";

/** The machine's suggestion for an event. Before any decision the effective
 *  label is the machine label; afterwards the agents transcript still holds
 *  it, while a plain heuristic annotation no longer surfaces it. */
export function machineLabel(event: EventView): string | null {
  if (event.decision === null) return event.label;
  return event.transcript?.judge_label ?? null;
}

/** Event indices still needing a decision, flagged ones first. */
export function reviewOrder(detail: SessionDetail): number[] {
  const undecided = detail.events.filter((event) => event.decision === null);
  const flagged = undecided.filter((event) => event.flagged).map((event) => event.index);
  const calm = undecided.filter((event) => !event.flagged).map((event) => event.index);
  return [...flagged, ...calm];
}

export function currentQueueEvent(queue: QueueState | null, detail: SessionDetail | null): EventView | null {
  if (!queue || !detail || queue.exhausted) return null;
  const index = queue.order[queue.cursor];
  if (index === undefined) return null;
  return detail.events.find((event) => event.index === index) ?? null;
}

/** Walk sessions from `from` in `direction` until one still has work.
 *  Returns false when none is found so callers can decide whether that
 *  means the queue is exhausted (forward) or just the front (backward). */
async function seek(
  store: Store,
  client: ApiClient,
  queue: QueueState,
  from: number,
  direction: 1 | -1,
): Promise<boolean> {
  let refPos = from;
  while (refPos >= 0 && refPos < queue.refs.length) {
    const ref = queue.refs[refPos];
    if (ref === undefined) break;
    const detail = await client.session(ref);
    const order = reviewOrder(detail);
    if (order.length > 0) {
      const cursor = direction === 1 ? 0 : order.length - 1;
      store.patch({ detail, queue: { ...queue, refPos, order, cursor, exhausted: false } });
      return true;
    }
    refPos += direction;
  }
  return false;
}

function markExhausted(store: Store, queue: QueueState): void {
  store.patch({ queue: { ...queue, order: [], cursor: 0, exhausted: true } });
}

export async function loadQueue(store: Store, client: ApiClient, datasetId: string): Promise<void> {
  try {
    const refs: string[] = [];
    let page = 1;
    for (;;) {
      const result = await client.sessions(datasetId, "undecided", page);
      refs.push(...result.sessions.map((session) => session.ref));
      if (page >= result.pages) break;
      page += 1;
    }
    const queue: QueueState = { datasetId, refs, refPos: 0, order: [], cursor: 0, exhausted: false };
    if (refs.length === 0 || !(await seek(store, client, queue, 0, 1))) {
      markExhausted(store, queue);
    }
  } catch (error) {
    toastError(store, error);
  }
}

export async function queueNext(store: Store, client: ApiClient): Promise<void> {
  const { queue } = store.get();
  if (!queue) return;
  if (queue.cursor + 1 < queue.order.length) {
    store.patch({ queue: { ...queue, cursor: queue.cursor + 1 } });
    return;
  }
  try {
    if (!(await seek(store, client, queue, queue.refPos + 1, 1))) {
      markExhausted(store, queue);
    }
  } catch (error) {
    toastError(store, error);
  }
}

export async function queuePrev(store: Store, client: ApiClient): Promise<void> {
  const { queue } = store.get();
  if (!queue) return;
  if (queue.cursor > 0) {
    store.patch({ queue: { ...queue, cursor: queue.cursor - 1 } });
    return;
  }
  if (queue.refPos === 0) return;
  try {
    await seek(store, client, queue, queue.refPos - 1, -1);
  } catch (error) {
    toastError(store, error);
  }
}

/** After a decision the event drops out of the order; the cursor then sits
 *  on whatever came after it. An emptied session hands off to the next. */
async function advanceAfterDecision(store: Store, client: ApiClient): Promise<void> {
  const { queue, detail } = store.get();
  if (!queue || !detail) return;
  const order = reviewOrder(detail);
  if (order.length === 0) {
    try {
      if (!(await seek(store, client, queue, queue.refPos + 1, 1))) {
        markExhausted(store, queue);
      }
    } catch (error) {
      toastError(store, error);
    }
    return;
  }
  const cursor = Math.min(queue.cursor, order.length - 1);
  store.patch({ queue: { ...queue, order, cursor } });
}

export type QueueChoice = { kind: "accept" } | { kind: "label"; index: number };

/** Decide the event under the cursor. Accept keeps the machine label; a
 *  digit picks one of the six labels and records a correction when it
 *  differs from the suggestion. */
export async function queueDecide(
  store: Store,
  client: ApiClient,
  outbox: DecisionOutbox,
  choice: QueueChoice,
  note?: string,
): Promise<DecideOutcome | null> {
  const state = store.get();
  const event = currentQueueEvent(state.queue, state.detail);
  if (!event || !state.detail) return null;

  const machine = machineLabel(event);
  let label: string;
  if (choice.kind === "accept") {
    if (machine === null) return null;
    label = machine;
  } else {
    const chosen = LABELS[choice.index];
    if (chosen === undefined) return null;
    label = chosen;
  }
  const verdict: DecisionVerdict = machine !== null && label === machine ? "accepted" : "corrected";
  const body: DecisionRequest = note === undefined || note === "" ? { label, verdict } : { label, verdict, note };

  const outcome = await decide(store, client, outbox, state.detail.ref, event.index, body);
  if (outcome !== "rolled-back") {
    await advanceAfterDecision(store, client);
  }
  return outcome;
}
