/** Entry point: wires the store, the API client, routing, and the keyboard
 *  onto the document. All data flows through the HTTP API; the only state
 *  that survives a reload is the unsent-decision outbox. */

import { ApiClient } from "./api.js";
import { isTypingTarget, keyToAction, type QueueAction } from "./keyboard.js";
import { loadQueue, machineLabel, queueDecide, queueNext, queuePrev } from "./queue.js";
import { parseHash, viewHash } from "./router.js";
import {
  DecisionOutbox,
  Store,
  decide,
  dismissToast,
  flushOutbox,
  memoryStorage,
  pushToast,
  toastError,
  type View,
} from "./state.js";
import type { CognitiveLabel, EventView } from "./types.js";
import { clearStash, render, type Handlers, type UploadInput } from "./views.js";

function pickStorage(): Storage | ReturnType<typeof memoryStorage> {
  try {
    window.localStorage.setItem("forager.probe", "1");
    window.localStorage.removeItem("forager.probe");
    return window.localStorage;
  } catch {
    return memoryStorage();
  }
}

export function boot(root: HTMLElement): void {
  const store = new Store();
  const client = new ApiClient();
  const outbox = new DecisionOutbox(pickStorage());
  store.patch({ pendingCount: outbox.size });

  async function refreshDatasets(): Promise<void> {
    try {
      const { datasets } = await client.listDatasets();
      store.patch({ datasets });
    } catch (error) {
      toastError(store, error);
    }
  }

  async function route(view: View): Promise<void> {
    store.patch({ view, busy: true });
    try {
      if (view.kind === "datasets") {
        await refreshDatasets();
      } else if (view.kind === "sessions") {
        const [page, stats] = await Promise.all([
          client.sessions(view.datasetId, view.filter, view.page),
          client.stats(view.datasetId),
        ]);
        store.patch({ sessionPage: page, stats });
      } else if (view.kind === "queue") {
        await loadQueue(store, client, view.datasetId);
      } else if (view.kind === "timeline") {
        const detail = await client.session(view.ref);
        store.patch({ detail });
      }
    } catch (error) {
      toastError(store, error);
    } finally {
      store.patch({ busy: false });
    }
  }

  function navigate(view: View): void {
    const target = viewHash(view);
    if (window.location.hash === target) {
      void route(view);
    } else {
      window.location.hash = target;
    }
  }

  async function upload(input: UploadInput): Promise<void> {
    if (input.file === null) {
      pushToast(store, "invalid_request", "choose a log file first");
      return;
    }
    try {
      const options: { name?: string; format?: string } = {};
      if (input.name !== "") options.name = input.name;
      if (input.format !== "auto") options.format = input.format;
      const result = await client.uploadDataset(input.file, input.file.name, input.mapping, options);
      clearStash("upload.");
      const rejects =
        result.rejected_rows > 0 ? `, ${result.rejected_rows} rows rejected` : "";
      pushToast(store, "uploaded", `dataset ${result.dataset_id} created${rejects}`);
      navigate({ kind: "sessions", datasetId: result.dataset_id, filter: "all", page: 1 });
    } catch (error) {
      toastError(store, error);
    }
  }

  async function runJob(datasetId: string, engine: "heuristic" | "agents"): Promise<void> {
    try {
      const body =
        engine === "heuristic"
          ? { engine }
          : { engine, backend: { kind: "mock" as const } };
      const { job_id: jobId } = await client.startLabelJob(datasetId, body);
      const status = await client.awaitJob(jobId, {
        onProgress: (s) => store.patch({ job: { jobId, datasetId, status: s } }),
      });
      if (status.state === "failed") {
        pushToast(store, "job_failed", status.error ?? "labeling job failed");
      } else {
        pushToast(store, "labeled", `labeled ${status.done} of ${status.total} sessions`);
      }
      store.patch({ job: null });
      await route(store.get().view);
    } catch (error) {
      store.patch({ job: null });
      toastError(store, error);
    }
  }

  async function exportDataset(datasetId: string, extended: boolean): Promise<void> {
    try {
      const stats = await client.stats(datasetId);
      if (stats.flagged_open > 0) {
        const go = window.confirm(
          `${stats.flagged_open} flagged event${stats.flagged_open === 1 ? " is" : "s are"} still undecided. export anyway?`,
        );
        if (!go) return;
      }
      const csv = await client.exportCsv(datasetId, { extended });
      const blob = new Blob([csv], { type: "text/csv" });
      const url = URL.createObjectURL(blob);
      const anchor = document.createElement("a");
      anchor.href = url;
      anchor.download = `${datasetId}${extended ? "-extended" : ""}.csv`;
      document.body.append(anchor);
      anchor.click();
      anchor.remove();
      URL.revokeObjectURL(url);
    } catch (error) {
      toastError(store, error);
    }
  }

  function decideTimeline(ref: string, event: EventView, label: CognitiveLabel): void {
    const machine = machineLabel(event);
    const verdict = machine !== null && label === machine ? "accepted" : "corrected";
    void decide(store, client, outbox, ref, event.index, { label, verdict });
  }

  function queueNoteValue(): string | undefined {
    const input = document.getElementById("queue-note");
    if (input instanceof HTMLInputElement && input.value.trim() !== "") {
      return input.value.trim();
    }
    return undefined;
  }

  function queueAction(action: QueueAction): void {
    if (action.kind === "next") {
      void queueNext(store, client);
    } else if (action.kind === "prev") {
      void queuePrev(store, client);
    } else {
      const note = queueNoteValue();
      const choice = action.kind === "accept" ? { kind: "accept" as const } : { kind: "label" as const, index: action.index };
      void queueDecide(store, client, outbox, choice, note).then((outcome) => {
        if (outcome !== null && outcome !== "rolled-back") clearStash("queue.");
      });
    }
  }

  const handlers: Handlers = {
    navigate,
    upload: (input) => void upload(input),
    runJob: (datasetId, engine) => void runJob(datasetId, engine),
    exportDataset: (datasetId, extended) => void exportDataset(datasetId, extended),
    decideTimeline,
    queueAction,
    dismissToast: (id) => dismissToast(store, id),
    retryOutbox: () => void flushOutbox(store, client, outbox),
  };

  store.subscribe((state) => render(root, state, handlers));

  window.addEventListener("hashchange", () => {
    void route(parseHash(window.location.hash));
  });

  window.addEventListener("keydown", (event) => {
    const state = store.get();
    if (state.view.kind !== "queue") return;
    if (isTypingTarget(event.target) && event.key !== "Enter") return;
    const action = keyToAction(event.key);
    if (action === null) return;
    event.preventDefault();
    queueAction(action);
  });

  void (async () => {
    if (outbox.size > 0) {
      await flushOutbox(store, client, outbox);
    }
    await route(parseHash(window.location.hash));
  })();
}

if (typeof document !== "undefined" && document.getElementById("app") !== null) {
  boot(document.getElementById("app") as HTMLElement);
}
