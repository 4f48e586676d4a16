/** DOM rendering. Views are plain functions from state to elements; every
 *  label, count, and badge shown here came out of an API payload. */

import { currentQueueEvent } from "./queue.js";
import type { QueueAction } from "./keyboard.js";
import type { AppState, Toast, View } from "./state.js";
import {
  LABELS,
  type CognitiveLabel,
  type DatasetSummary,
  type EventView,
  type SessionSummary,
  type TranscriptRecord,
} from "./types.js";

export type UploadInput = {
  file: File | null;
  mapping: string;
  name: string;
  format: string;
};

export type Handlers = {
  navigate(view: View): void;
  upload(input: UploadInput): void;
  runJob(datasetId: string, engine: "heuristic" | "agents"): void;
  exportDataset(datasetId: string, extended: boolean): void;
  decideTimeline(ref: string, event: EventView, label: CognitiveLabel): void;
  queueAction(action: QueueAction): void;
  dismissToast(id: number): void;
  retryOutbox(): void;
};

type Child = Node | string | null | undefined;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  ...children: Child[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (key === "class") node.className = value;
    else node.setAttribute(key, value);
  }
  for (const child of children) {
    if (child !== null && child !== undefined) node.append(child);
  }
  return node;
}

function button(label: string, cls: string, onClick: () => void): HTMLButtonElement {
  const node = el("button", { class: cls, type: "button" }, label);
  node.addEventListener("click", onClick);
  return node;
}

// Text typed into forms has to survive re-renders triggered by background
// state changes (toasts, job progress). Each keyed input mirrors its value
// into the stash as the user types, and a rebuild reads it back out.
const stash = new Map<string, string>();

function bindStash<T extends HTMLInputElement | HTMLTextAreaElement | HTMLSelectElement>(
  node: T,
  key: string,
  fallback: string,
): T {
  node.setAttribute("data-stash", key);
  node.value = stash.get(key) ?? fallback;
  node.addEventListener("input", () => stash.set(key, node.value));
  node.addEventListener("change", () => stash.set(key, node.value));
  return node;
}

export function clearStash(prefix: string): void {
  for (const key of [...stash.keys()]) {
    if (key.startsWith(prefix)) stash.delete(key);
  }
}

function formatTime(epochMs: number): string {
  return new Date(epochMs).toISOString().replace("T", " ").slice(0, 19);
}

function actionIcon(action: string): string {
  if (action === "QUERY") return "⌕";
  if (action === "CLICK") return "☛";
  if (action === "RATE") return "★";
  return "•";
}

function labelChip(label: string | null): HTMLElement {
  if (label === null) return el("span", { class: "chip chip-none" }, "unlabeled");
  return el("span", { class: `chip chip-${label}` }, label);
}

function percent(part: number, whole: number): number {
  if (whole <= 0) return 0;
  return Math.round((100 * part) / whole);
}

function progressBar(title: string, part: number, whole: number, cls: string): HTMLElement {
  const pct = percent(part, whole);
  return el(
    "div",
    { class: "progress-row", title: `${title}: ${part} of ${whole}` },
    el("span", { class: "progress-label" }, title),
    el("div", { class: "progress-track" }, el("div", { class: `progress-fill ${cls}`, style: `width:${pct}%` })),
    el("span", { class: "progress-count" }, `${part}/${whole}`),
  );
}

function transcriptDrawer(transcript: TranscriptRecord): HTMLElement {
  const critic = transcript.critic_agrees
    ? el("div", { class: "agent-row" }, el("b", {}, "Critic"), " agrees. ", transcript.critic_justification)
    : el(
        "div",
        { class: "agent-row" },
        el("b", {}, "Critic"),
        " proposes ",
        labelChip(transcript.critic_label),
        " ",
        transcript.critic_justification,
      );
  return el(
    "details",
    { class: "drawer" },
    el("summary", {}, `transcript (disagreement ${transcript.disagreement.toFixed(2)})`),
    el(
      "div",
      { class: "agent-row" },
      el("b", {}, "Analyst"),
      " ",
      labelChip(transcript.analyst_label),
      " ",
      transcript.analyst_justification,
    ),
    critic,
    el(
      "div",
      { class: "agent-row" },
      el("b", {}, "Judge"),
      " ",
      labelChip(transcript.judge_label),
      " ",
      transcript.judge_justification,
    ),
  );
}

type CardOptions = {
  pickLabel?: (label: CognitiveLabel) => void;
  showHints?: boolean;
};

function eventCard(event: EventView, options: CardOptions = {}): HTMLElement {
  const meta = el(
    "div",
    { class: "event-meta" },
    el("span", { class: "event-icon", title: event.action }, actionIcon(event.action)),
    el("span", { class: "event-action" }, event.action),
    el("span", { class: "event-time" }, formatTime(event.timestamp)),
    event.dwell_ms !== null ? el("span", { class: "event-dwell" }, `dwell ${(event.dwell_ms / 1000).toFixed(1)}s`) : null,
    event.answer_present ? el("span", { class: "event-answer" }, "answer shown") : null,
  );

  const labelBits = el(
    "div",
    { class: "event-label" },
    labelChip(event.label),
    event.source !== null ? el("span", { class: "event-source" }, event.source) : null,
    event.confidence !== null ? el("span", { class: "event-confidence" }, `${Math.round(event.confidence * 100)}%`) : null,
    event.flagged ? el("span", { class: "badge-flag" }, "⚑ flagged") : null,
    event.decision
      ? el("span", { class: `badge-decision badge-${event.decision.verdict}` }, event.decision.verdict)
      : null,
  );

  const card = el(
    "article",
    { class: `event-card${event.flagged ? " is-flagged" : ""}${event.decision ? " is-decided" : ""}` },
    meta,
    el("div", { class: "event-content" }, event.content, event.content_id ? el("span", { class: "event-doc" }, ` [${event.content_id}]`) : null),
    labelBits,
  );

  if (event.decision?.note) {
    card.append(el("div", { class: "event-note" }, `note: ${event.decision.note}`));
  }
  if (event.justification && !event.transcript) {
    card.append(el("div", { class: "event-just" }, event.justification));
  }
  if (event.transcript) {
    card.append(transcriptDrawer(event.transcript));
  }
  if (options.pickLabel) {
    const picker = el("div", { class: "label-picker" });
    LABELS.forEach((label, i) => {
      const hint = options.showHints ? `${i + 1} ` : "";
      const cls = `pick pick-${label}${event.label === label ? " is-machine" : ""}`;
      picker.append(button(`${hint}${label}`, cls, () => options.pickLabel?.(label)));
    });
    card.append(picker);
  }
  return card;
}

function renderTopBar(state: AppState, handlers: Handlers): HTMLElement {
  const nav = el(
    "nav",
    { class: "topbar" },
    button("forager review", "brand", () => handlers.navigate({ kind: "datasets" })),
    button("datasets", "nav-link", () => handlers.navigate({ kind: "datasets" })),
    button("upload", "nav-link", () => handlers.navigate({ kind: "upload" })),
  );
  if (state.job) {
    const { status } = state.job;
    const text =
      status.state === "running"
        ? `labeling ${status.done}/${status.total}`
        : status.state === "done"
          ? "labeling done"
          : "labeling failed";
    nav.append(el("span", { class: `job-pill job-${status.state}` }, text));
  }
  if (state.pendingCount > 0) {
    nav.append(
      el("span", { class: "pending-pill" }, `${state.pendingCount} unsent`),
      button("retry", "retry-btn", () => handlers.retryOutbox()),
    );
  }
  if (state.busy) nav.append(el("span", { class: "busy" }, "…"));
  return nav;
}

function renderToasts(state: AppState, handlers: Handlers): HTMLElement {
  const stack = el("div", { class: "toasts" });
  for (const toast of state.toasts) {
    stack.append(toastNode(toast, handlers));
  }
  return stack;
}

function toastNode(toast: Toast, handlers: Handlers): HTMLElement {
  const node = el(
    "div",
    { class: "toast", "data-toast-id": String(toast.id) },
    el("b", { class: "toast-code" }, toast.code),
    el("span", { class: "toast-message" }, toast.message),
  );
  if (toast.retryable) {
    node.append(button("retry", "toast-retry", () => handlers.retryOutbox()));
  }
  node.append(button("×", "toast-dismiss", () => handlers.dismissToast(toast.id)));
  return node;
}

function datasetRow(dataset: DatasetSummary, handlers: Handlers): HTMLElement {
  const open = dataset.flagged_open;
  return el(
    "section",
    { class: "dataset-card", "data-dataset-id": dataset.dataset_id },
    el(
      "header",
      { class: "dataset-head" },
      el("h2", {}, dataset.name),
      el("code", { class: "dataset-id" }, dataset.dataset_id),
      el("span", { class: "dataset-meta" }, `${dataset.n_sessions} sessions, ${dataset.n_events} events, ${formatTime(dataset.created_at)}`),
      dataset.rejected_rows > 0 ? el("span", { class: "dataset-rejects" }, `${dataset.rejected_rows} rows rejected`) : null,
    ),
    progressBar("labeled", dataset.labeled_events, dataset.n_events, "fill-labeled"),
    progressBar("decided", dataset.decided, dataset.n_events, "fill-decided"),
    progressBar("open flags", open, dataset.n_events, "fill-flagged"),
    el(
      "div",
      { class: "dataset-actions" },
      button("sessions", "action", () =>
        handlers.navigate({ kind: "sessions", datasetId: dataset.dataset_id, filter: "all", page: 1 }),
      ),
      button(open > 0 ? `review queue (${open})` : "review queue", "action", () =>
        handlers.navigate({ kind: "queue", datasetId: dataset.dataset_id }),
      ),
      button("label: heuristic", "action", () => handlers.runJob(dataset.dataset_id, "heuristic")),
      button("label: agents", "action", () => handlers.runJob(dataset.dataset_id, "agents")),
      button("export csv", "action", () => handlers.exportDataset(dataset.dataset_id, false)),
    ),
  );
}

function renderDatasets(state: AppState, handlers: Handlers): HTMLElement {
  const main = el("main", { class: "page page-datasets" }, el("h1", {}, "datasets"));
  if (state.datasets.length === 0) {
    main.append(
      el("p", { class: "empty" }, "no datasets yet."),
      button("upload a log", "action", () => handlers.navigate({ kind: "upload" })),
    );
    return main;
  }
  for (const dataset of state.datasets) {
    main.append(datasetRow(dataset, handlers));
  }
  return main;
}

const MAPPING_TEMPLATE = JSON.stringify(
  {
    user_id_col: "uid",
    timestamp_col: "ts",
    content_col: "text",
    timestamp_format: "epoch_ms",
    action_col: "act",
    action_value_map: { Q: "QUERY", C: "CLICK" },
    content_id_col: "doc",
    answer_present_col: "ans",
  },
  null,
  2,
);

function renderUpload(handlers: Handlers): HTMLElement {
  const file = el("input", { type: "file", id: "upload-file" });
  const name = bindStash(
    el("input", { type: "text", placeholder: "dataset name (defaults to the file name)" }),
    "upload.name",
    "",
  );
  const format = el("select", {});
  for (const value of ["auto", "csv", "json"]) {
    format.append(el("option", { value }, value));
  }
  bindStash(format, "upload.format", "auto");
  const mapping = bindStash(
    el("textarea", { rows: "12", spellcheck: "false" }),
    "upload.mapping",
    MAPPING_TEMPLATE,
  );

  const submit = button("upload dataset", "action primary", () => {
    handlers.upload({
      file: file.files?.[0] ?? null,
      mapping: mapping.value,
      name: name.value.trim(),
      format: format.value,
    });
  });

  return el(
    "main",
    { class: "page page-upload" },
    el("h1", {}, "upload a search log"),
    el(
      "form",
      { class: "upload-form", id: "upload-form" },
      el("label", {}, "log file (csv or json lines)", file),
      el("label", {}, "name", name),
      el("label", {}, "format", format),
      el("label", {}, "column mapping", mapping),
      submit,
    ),
  );
}

function sessionRow(session: SessionSummary, handlers: Handlers): HTMLElement {
  const row = el(
    "tr",
    { class: "session-row", "data-ref": session.ref },
    el("td", { class: "mono" }, session.session_id),
    el("td", {}, session.user_id),
    el("td", { class: "session-query" }, session.first_query),
    el("td", { class: "num" }, String(session.n_events)),
    el("td", { class: "num" }, `${session.labeled_events}/${session.n_events}`),
    el("td", { class: "num" }, String(session.decided)),
    el("td", { class: "num" }, session.flagged_open > 0 ? `⚑ ${session.flagged_open}` : "0"),
  );
  row.addEventListener("click", () => handlers.navigate({ kind: "timeline", ref: session.ref }));
  return row;
}

function statsStrip(state: AppState): HTMLElement | null {
  const stats = state.stats;
  if (!stats) return null;
  const strip = el(
    "div",
    { class: "stats-strip" },
    el("span", {}, `${stats.labeled_events}/${stats.total_events} labeled`),
    el("span", {}, `${stats.decided} decided`),
    el("span", {}, `${stats.flagged_open} open flags`),
    stats.alpha_vs_gold !== null ? el("span", {}, `alpha vs gold ${stats.alpha_vs_gold.toFixed(3)}`) : null,
  );
  for (const label of LABELS) {
    const count = stats.labels[label] ?? 0;
    if (count > 0) strip.append(el("span", { class: `chip chip-${label}` }, `${label} ${count}`));
  }
  return strip;
}

function renderSessions(state: AppState, handlers: Handlers): HTMLElement {
  const view = state.view;
  if (view.kind !== "sessions") throw new Error("wrong view");
  const page = state.sessionPage;

  const filter = el("select", { class: "filter-select" });
  for (const value of ["all", "flagged", "undecided"] as const) {
    filter.append(el("option", { value }, value));
  }
  filter.value = view.filter;
  filter.addEventListener("change", () => {
    handlers.navigate({ kind: "sessions", datasetId: view.datasetId, filter: filter.value as typeof view.filter, page: 1 });
  });

  const toolbar = el(
    "div",
    { class: "toolbar" },
    button("← datasets", "action", () => handlers.navigate({ kind: "datasets" })),
    filter,
    button("review queue", "action", () => handlers.navigate({ kind: "queue", datasetId: view.datasetId })),
    button("export csv", "action", () => handlers.exportDataset(view.datasetId, false)),
    button("export extended", "action", () => handlers.exportDataset(view.datasetId, true)),
  );

  const main = el("main", { class: "page page-sessions" }, el("h1", {}, `sessions in ${view.datasetId}`), toolbar);
  const strip = statsStrip(state);
  if (strip) main.append(strip);

  if (!page) {
    main.append(el("p", { class: "empty" }, "loading…"));
    return main;
  }
  if (page.sessions.length === 0) {
    main.append(el("p", { class: "empty" }, "no sessions match this filter."));
    return main;
  }

  const table = el(
    "table",
    { class: "session-table" },
    el(
      "thead",
      {},
      el(
        "tr",
        {},
        el("th", {}, "session"),
        el("th", {}, "user"),
        el("th", {}, "first query"),
        el("th", {}, "events"),
        el("th", {}, "labeled"),
        el("th", {}, "decided"),
        el("th", {}, "open flags"),
      ),
    ),
  );
  const body = el("tbody", {});
  for (const session of page.sessions) {
    body.append(sessionRow(session, handlers));
  }
  table.append(body);
  main.append(el("div", { class: "table-scroll" }, table));

  const pager = el("div", { class: "pager" });
  if (page.page > 1) {
    pager.append(
      button("← prev", "action", () =>
        handlers.navigate({ kind: "sessions", datasetId: view.datasetId, filter: view.filter, page: page.page - 1 }),
      ),
    );
  }
  pager.append(el("span", {}, `page ${page.page} of ${Math.max(page.pages, 1)} (${page.total} sessions)`));
  if (page.page < page.pages) {
    pager.append(
      button("next →", "action", () =>
        handlers.navigate({ kind: "sessions", datasetId: view.datasetId, filter: view.filter, page: page.page + 1 }),
      ),
    );
  }
  main.append(pager);
  return main;
}

function renderQueue(state: AppState, handlers: Handlers): HTMLElement {
  const view = state.view;
  if (view.kind !== "queue") throw new Error("wrong view");
  const main = el("main", { class: "page page-queue" }, el("h1", {}, "review queue"));
  main.append(
    el(
      "div",
      { class: "toolbar" },
      button("← sessions", "action", () =>
        handlers.navigate({ kind: "sessions", datasetId: view.datasetId, filter: "all", page: 1 }),
      ),
    ),
  );

  const queue = state.queue;
  if (!queue) {
    main.append(el("p", { class: "empty" }, "loading…"));
    return main;
  }
  if (queue.exhausted) {
    main.append(el("p", { class: "queue-clear" }, "✓ queue clear: nothing awaiting review."));
    return main;
  }
  const event = currentQueueEvent(queue, state.detail);
  if (!event || !state.detail) {
    main.append(el("p", { class: "empty" }, "loading…"));
    return main;
  }

  main.append(
    el(
      "div",
      { class: "queue-position" },
      el("span", { class: "mono" }, state.detail.session_id),
      el("span", {}, `item ${queue.cursor + 1} of ${queue.order.length}, session ${queue.refPos + 1} of ${queue.refs.length}`),
    ),
  );

  main.append(
    eventCard(event, {
      showHints: true,
      pickLabel: (label) => handlers.queueAction({ kind: "label", index: LABELS.indexOf(label) }),
    }),
  );

  const note = bindStash(
    el("input", { type: "text", id: "queue-note", placeholder: "optional note recorded with the decision" }),
    "queue.note",
    "",
  );

  main.append(
    el("label", { class: "queue-note-label" }, "note", note),
    el(
      "div",
      { class: "queue-controls" },
      button("← prev (k)", "action", () => handlers.queueAction({ kind: "prev" })),
      button(event.label !== null ? `accept ${event.label} (Enter)` : "accept (Enter)", "action primary", () =>
        handlers.queueAction({ kind: "accept" }),
      ),
      button("next (j) →", "action", () => handlers.queueAction({ kind: "next" })),
    ),
    el("p", { class: "keyboard-hint" }, "keys: 1-6 pick a label, Enter accepts the suggestion, j/k or arrows move"),
  );
  return main;
}

function renderTimeline(state: AppState, handlers: Handlers): HTMLElement {
  const view = state.view;
  if (view.kind !== "timeline") throw new Error("wrong view");
  const detail = state.detail;
  const main = el("main", { class: "page page-timeline" });
  if (!detail || detail.ref !== view.ref) {
    main.append(el("p", { class: "empty" }, "loading…"));
    return main;
  }
  main.append(
    el(
      "div",
      { class: "toolbar" },
      button("← sessions", "action", () =>
        handlers.navigate({ kind: "sessions", datasetId: detail.dataset_id, filter: "all", page: 1 }),
      ),
    ),
    el("h1", {}, `session ${detail.session_id}`),
    el("p", { class: "timeline-user" }, `user ${detail.user_id}, ${detail.events.length} events`),
  );
  for (const event of detail.events) {
    main.append(
      eventCard(event, {
        pickLabel: (label) => handlers.decideTimeline(detail.ref, event, label),
      }),
    );
  }
  return main;
}

export function render(root: HTMLElement, state: AppState, handlers: Handlers): void {
  let page: HTMLElement;
  switch (state.view.kind) {
    case "datasets":
      page = renderDatasets(state, handlers);
      break;
    case "upload":
      page = renderUpload(handlers);
      break;
    case "sessions":
      page = renderSessions(state, handlers);
      break;
    case "queue":
      page = renderQueue(state, handlers);
      break;
    case "timeline":
      page = renderTimeline(state, handlers);
      break;
  }
  root.replaceChildren(renderTopBar(state, handlers), page, renderToasts(state, handlers));
}
