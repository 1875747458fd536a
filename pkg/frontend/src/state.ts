/**
 * View state and its transitions, kept pure so every invariant is testable
 * without a DOM. Two invariants matter most: at most one in-flight ask at
 * a time (`pending`), and the trace panel only ever shows the transcript
 * of the session it was opened for.
 */

import type { AskResponse, Citation, Transcript } from "./types.js";

export type ChatTurn =
  | { kind: "user"; text: string }
  | {
      kind: "assistant";
      answer: string;
      outcome: string;
      citations: Citation[];
      sessionId: string;
      refinementCount: number;
    }
  | { kind: "error"; message: string; query: string }
  | { kind: "hint"; message: string };

export type TraceView =
  | { sessionId: string; status: "loading" }
  | { sessionId: string; status: "ready"; transcript: Transcript }
  | { sessionId: string; status: "expired" };

export interface ChatViewState {
  turns: ChatTurn[];
  pending: boolean;
  trace: TraceView | null;
  quote: string | null;
}

export function initialState(): ChatViewState {
  return { turns: [], pending: false, trace: null, quote: null };
}

export type SubmitDecision =
  | { ok: true; state: ChatViewState; query: string }
  | { ok: false; reason: "empty" | "pending"; state: ChatViewState };

/** Prepend a quoted prior answer to a follow-up question. */
export function composeQuery(quote: string | null, text: string): string {
  if (!quote) return text;
  const quoted = quote
    .split("\n")
    .map((line) => `> ${line}`)
    .join("\n");
  return `${quoted}\n\n${text}`;
}

export function beginSubmit(state: ChatViewState, text: string): SubmitDecision {
  if (state.pending) {
    return { ok: false, reason: "pending", state };
  }
  const trimmed = text.trim();
  if (!trimmed) {
    return {
      ok: false,
      reason: "empty",
      state: {
        ...state,
        turns: [...state.turns, { kind: "hint", message: "Type a question first." }],
      },
    };
  }
  const query = composeQuery(state.quote, trimmed);
  return {
    ok: true,
    query,
    state: {
      ...state,
      pending: true,
      quote: null,
      turns: [...state.turns, { kind: "user", text: query }],
    },
  };
}

export function acceptAnswer(state: ChatViewState, response: AskResponse): ChatViewState {
  return {
    ...state,
    pending: false,
    turns: [
      ...state.turns,
      {
        kind: "assistant",
        answer: response.answer,
        outcome: response.outcome,
        citations: response.citations,
        sessionId: response.session_id,
        refinementCount: response.refinement_count,
      },
    ],
  };
}

export function failSubmit(
  state: ChatViewState,
  message: string,
  query: string,
  hint: boolean,
): ChatViewState {
  const turn: ChatTurn = hint
    ? { kind: "hint", message }
    : { kind: "error", message, query };
  return { ...state, pending: false, turns: [...state.turns, turn] };
}

export function showTraceLoading(state: ChatViewState, sessionId: string): ChatViewState {
  return { ...state, trace: { sessionId, status: "loading" } };
}

export function showTraceReady(state: ChatViewState, transcript: Transcript): ChatViewState {
  // a stale response for a panel the user already navigated away from is dropped
  if (state.trace === null || state.trace.sessionId !== transcript.session_id) {
    return state;
  }
  return { ...state, trace: { sessionId: transcript.session_id, status: "ready", transcript } };
}

export function showTraceExpired(state: ChatViewState, sessionId: string): ChatViewState {
  if (state.trace === null || state.trace.sessionId !== sessionId) {
    return state;
  }
  return { ...state, trace: { sessionId, status: "expired" } };
}

export function closeTrace(state: ChatViewState): ChatViewState {
  return { ...state, trace: null };
}

export function setQuote(state: ChatViewState, text: string | null): ChatViewState {
  return { ...state, quote: text };
}
