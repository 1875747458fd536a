/** Shared fixtures: a scripted fetch and canned service payloads. */

import { ServiceClient } from "../src/api.js";
import { ChatController, ControllerOptions } from "../src/controller.js";
import type {
  AskResponse,
  RetrievedSet,
  Transcript,
  TranscriptStep,
  VerdictEntry,
} from "../src/types.js";

export const FALLBACK_MESSAGE =
  "The system could not find a satisfactory answer to this query in the indexed documents.";

export function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

export interface RecordedCall {
  url: string;
  init?: RequestInit;
}

type Handler = (url: string, init?: RequestInit) => Response | Promise<Response>;

export function scriptedFetch(handler: Handler) {
  const calls: RecordedCall[] = [];
  const impl = async (url: string, init?: RequestInit): Promise<Response> => {
    calls.push({ url, init });
    return handler(url, init);
  };
  return { impl, calls };
}

export function makeController(handler: Handler, opts: ControllerOptions = {}) {
  const { impl, calls } = scriptedFetch(handler);
  const client = new ServiceClient("http://svc.test", impl);
  return { controller: new ChatController(client, opts), calls, client };
}

export function askResponse(overrides: Partial<AskResponse> = {}): AskResponse {
  return {
    session_id: "sess-1",
    answer: "Grinding restores smoothness [d1:text_chunk:0].",
    outcome: "answered",
    citations: [
      { unit_id: "d1:text_chunk:0", doc_id: "d1", score: 0.9132 },
      { unit_id: "d2:text_chunk:1", doc_id: "d2", score: 0.5521 },
    ],
    refinement_count: 0,
    ...overrides,
  };
}

const BASE_ROLES = ["user_proxy", "retriever", "generator", "evaluator"];

/** A transcript shaped like the engine's: base pipeline plus one
 * refiner/retriever/generator/evaluator round per refinement. */
export function buildTranscript(
  refinements: number,
  overrides: Partial<Transcript> = {},
): Transcript {
  const roles = [...BASE_ROLES];
  for (let i = 0; i < refinements; i++) {
    roles.push("query_refiner", "retriever", "generator", "evaluator");
  }
  const steps: TranscriptStep[] = roles.map((role, i) => ({
    role,
    input: `${role} input ${i}`,
    output: `${role} output ${i}`,
    timestamp: 1700000000 + i,
  }));
  const retrieved: RetrievedSet[] = [];
  for (let i = 0; i <= refinements; i++) {
    retrieved.push({
      query_used: i === 0 ? "original query" : `refined query ${i}`,
      hits: [
        { unit_id: "d1:text_chunk:0", score: 0.9132 },
        { unit_id: "d2:text_chunk:1", score: 0.5521 },
      ],
    });
  }
  const verdicts: VerdictEntry[] = [];
  for (let i = 0; i <= refinements; i++) {
    verdicts.push(
      i < refinements
        ? { verdict: "unsatisfactory", feedback: `needs work ${i}` }
        : { verdict: "satisfactory", feedback: "clear and grounded" },
    );
  }
  return {
    session_id: "sess-1",
    original_query: "original query",
    mode: "multi_agent",
    refinement_count: refinements,
    final_answer: "final answer",
    outcome: "answered",
    steps,
    verdicts,
    retrieved_sets: retrieved,
    citations: [{ unit_id: "d1:text_chunk:0", doc_id: "d1", score: 0.9132 }],
    ...overrides,
  };
}

export function transcriptWithGeneratorInputs(inputs: string[]): Transcript {
  const t = buildTranscript(Math.max(inputs.length - 1, 0));
  let g = 0;
  t.steps = t.steps.map((s) =>
    s.role === "generator" ? { ...s, input: inputs[g++] ?? s.input } : s,
  );
  return t;
}
