/**
 * Wire types for the /v1 service endpoints. These mirror the JSON the
 * service returns; the UI never computes any of these fields itself.
 */

export interface Citation {
  unit_id: string;
  doc_id: string;
  score: number;
}

export type Outcome = "answered" | "fallback" | "error";

export interface AskResponse {
  session_id: string;
  answer: string;
  outcome: Outcome;
  citations: Citation[];
  refinement_count: number;
}

export interface TranscriptStep {
  role: string;
  input: string;
  output: string;
  timestamp: number;
}

export interface VerdictEntry {
  verdict: string;
  feedback: string;
}

export interface RetrievedHit {
  unit_id: string;
  score: number;
}

export interface RetrievedSet {
  query_used: string;
  hits: RetrievedHit[];
}

export interface Transcript {
  session_id: string;
  original_query: string;
  mode: string;
  refinement_count: number;
  final_answer: string;
  outcome: string;
  steps: TranscriptStep[];
  verdicts: VerdictEntry[];
  retrieved_sets: RetrievedSet[];
  citations: Citation[];
}

export interface HealthResponse {
  status: string;
  kb_size: number;
  backends: Record<string, { kind: string; reachable: boolean | null }>;
}

export interface ErrorBody {
  code: string;
  message: string;
  detail: unknown;
}
