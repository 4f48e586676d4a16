/** Wire types for the forager labeling service.
 *
 * Every shape here mirrors a JSON payload produced by the HTTP API. The UI
 * never invents labels or derives them client-side; whatever the server says
 * is what gets rendered.
 */

export const LABELS = [
  "FollowingScent",
  "ApproachingSource",
  "DietEnrichment",
  "PoorScent",
  "LeavingPatch",
  "ForagingSuccess",
] as const;

export type CognitiveLabel = (typeof LABELS)[number];

export function isLabel(value: string): value is CognitiveLabel {
  return (LABELS as readonly string[]).includes(value);
}

export type DatasetSummary = {
  dataset_id: string;
  name: string;
  created_at: number;
  n_sessions: number;
  n_events: number;
  rejected_rows: number;
  labeled_events: number;
  flagged_open: number;
  decided: number;
};

export type SessionFilter = "all" | "flagged" | "undecided";

export type SessionSummary = {
  ref: string;
  session_id: string;
  user_id: string;
  n_events: number;
  first_timestamp: number;
  first_query: string;
  labeled_events: number;
  flagged_open: number;
  decided: number;
};

export type SessionPage = {
  sessions: SessionSummary[];
  page: number;
  pages: number;
  total: number;
  page_size: number;
};

export type TranscriptRecord = {
  session_id: string;
  event_index: number;
  analyst_label: string;
  analyst_justification: string;
  critic_agrees: boolean;
  critic_label: string | null;
  critic_justification: string;
  judge_label: string;
  judge_justification: string;
  disagreement: number;
};

export type DecisionVerdict = "accepted" | "corrected";

export type DecisionRecord = {
  session_id: string;
  event_index: number;
  label: string;
  verdict: DecisionVerdict;
  decided_at: number;
  note: string | null;
};

export type EventView = {
  session_id: string;
  index: number;
  timestamp: number;
  action: string;
  content: string;
  content_id: string | null;
  answer_present: boolean;
  dwell_ms: number | null;
  label: string | null;
  source: string | null;
  confidence: number | null;
  flagged: boolean;
  justification: string | null;
  decision: DecisionRecord | null;
  transcript: TranscriptRecord | null;
};

export type SessionDetail = {
  ref: string;
  dataset_id: string;
  session_id: string;
  user_id: string;
  events: EventView[];
};

export type UploadResult = {
  dataset_id: string;
  rejected_rows: number;
  rejects: { row: number; reason: string }[];
};

export type DecisionRequest = {
  label: string;
  verdict: DecisionVerdict;
  note?: string;
};

export type LabelJobRequest = {
  engine: "heuristic" | "agents";
  backend?: { kind: "mock" | "http"; policy?: unknown; endpoint?: string };
  flag_rate?: number;
  max_concurrency?: number;
  labeler?: string;
};

export type JobStatus = {
  state: "running" | "done" | "failed";
  done: number;
  total: number;
  error: string | null;
};

export type Stats = {
  total_events: number;
  labeled_events: number;
  decided: number;
  flagged_open: number;
  labels: Record<string, number>;
  alpha_vs_gold: number | null;
};

export type ApiErrorBody = {
  code: string;
  message: string;
};
