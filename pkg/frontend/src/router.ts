/** Hash routing. The location hash is the only navigation state the UI
 *  keeps, so a reload lands on the same view rebuilt from the API. */

import type { View } from "./state.js";
import type { SessionFilter } from "./types.js";

const FILTERS: SessionFilter[] = ["all", "flagged", "undecided"];

export function parseHash(hash: string): View {
  const trimmed = hash.replace(/^#\/?/, "");
  const [path = "", query = ""] = trimmed.split("?", 2);
  const parts = path.split("/").filter((part) => part.length > 0);

  if (parts[0] === "upload") return { kind: "upload" };
  if (parts[0] === "sessions" && parts[1] !== undefined) {
    return { kind: "timeline", ref: decodeURIComponent(parts[1]) };
  }
  if (parts[0] === "datasets" && parts[1] !== undefined) {
    const datasetId = parts[1];
    if (parts[2] === "queue") return { kind: "queue", datasetId };
    const params = new URLSearchParams(query);
    const rawFilter = params.get("filter") ?? "all";
    const filter = FILTERS.includes(rawFilter as SessionFilter) ? (rawFilter as SessionFilter) : "all";
    const page = Math.max(1, Number(params.get("page") ?? "1") || 1);
    return { kind: "sessions", datasetId, filter, page };
  }
  return { kind: "datasets" };
}

export function viewHash(view: View): string {
  switch (view.kind) {
    case "datasets":
      return "#/";
    case "upload":
      return "#/upload";
    case "sessions":
      return `#/datasets/${view.datasetId}?filter=${view.filter}&page=${view.page}`;
    case "queue":
      return `#/datasets/${view.datasetId}/queue`;
    case "timeline":
      return `#/sessions/${encodeURIComponent(view.ref)}`;
  }
}
