/**
 * HTML-string renderers. Pure functions from state to markup so the whole
 * surface can be asserted in tests without a browser; app.ts owns the DOM.
 */

import type { ChatTurn, TraceView } from "./state.js";
import type { Citation, Transcript } from "./types.js";
import type { UnitPreview } from "./preview.js";

export function escapeHtml(s: string): string {
  return s
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function renderTurns(turns: ChatTurn[]): string {
  return turns.map(renderTurn).join("\n");
}

function renderTurn(turn: ChatTurn): string {
  switch (turn.kind) {
    case "user":
      return `<div class="turn turn-user"><pre class="query-text">${escapeHtml(turn.text)}</pre></div>`;
    case "assistant":
      return renderAssistant(turn);
    case "error":
      return (
        `<div class="turn turn-error">` +
        `<span class="error-text">${escapeHtml(turn.message)}</span> ` +
        `<button data-action="retry" data-query="${escapeHtml(turn.query)}">retry</button>` +
        `</div>`
      );
    case "hint":
      return `<div class="turn turn-hint">${escapeHtml(turn.message)}</div>`;
  }
}

function renderAssistant(turn: Extract<ChatTurn, { kind: "assistant" }>): string {
  const fallback = turn.outcome === "fallback";
  const badge = fallback
    ? `<span class="badge badge-fallback">no answer found</span>`
    : `<span class="badge badge-${escapeHtml(turn.outcome)}">${escapeHtml(turn.outcome)}</span>`;
  const body = fallback
    ? `<p class="fallback-message">${escapeHtml(turn.answer)}</p>`
    : `<p class="answer-text">${escapeHtml(turn.answer)}</p>`;
  return (
    `<div class="turn turn-assistant" data-session-id="${escapeHtml(turn.sessionId)}">` +
    badge +
    body +
    renderChips(turn.citations) +
    `<div class="turn-actions">` +
    `<button data-action="open-trace" data-session-id="${escapeHtml(turn.sessionId)}">trace</button>` +
    `<button data-action="quote" data-session-id="${escapeHtml(turn.sessionId)}">quote</button>` +
    `</div>` +
    `</div>`
  );
}

function renderChips(citations: Citation[]): string {
  if (citations.length === 0) return "";
  const chips = citations
    .map(
      (c) =>
        `<button class="chip" data-unit-id="${escapeHtml(c.unit_id)}" ` +
        `title="${escapeHtml(c.doc_id)}">${escapeHtml(c.unit_id)}</button>`,
    )
    .join("");
  return `<div class="citations">${chips}</div>`;
}

export function renderTrace(view: TraceView | null): string {
  if (view === null) return "";
  if (view.status === "loading") {
    return `<div class="trace-panel"><p class="trace-loading">loading transcript for ${escapeHtml(view.sessionId)}...</p></div>`;
  }
  if (view.status === "expired") {
    return `<div class="trace-panel"><p class="trace-notice">transcript expired</p></div>`;
  }
  return renderTranscript(view.transcript);
}

function renderTranscript(t: Transcript): string {
  const steps = t.steps
    .map(
      (s, i) =>
        `<li class="trace-step" data-role="${escapeHtml(s.role)}">` +
        `<span class="step-seq">${i + 1}</span> ` +
        `<span class="role-label">${escapeHtml(s.role)}</span>` +
        `<pre class="step-output">${escapeHtml(s.output)}</pre>` +
        `</li>`,
    )
    .join("");

  const retrievals = t.retrieved_sets
    .map((set, i) => {
      const hits = set.hits
        .map(
          (h) =>
            `<li class="hit-row"><code>${escapeHtml(h.unit_id)}</code> ` +
            `<span class="hit-score">${h.score.toFixed(4)}</span></li>`,
        )
        .join("");
      return (
        `<div class="retrieval-group">` +
        `<div class="group-title">retrieval ${i + 1}</div>` +
        `<div class="query-used">${escapeHtml(set.query_used)}</div>` +
        `<ul class="hit-list">${hits}</ul>` +
        `</div>`
      );
    })
    .join("");

  const verdicts = t.verdicts
    .map(
      (v) =>
        `<div class="verdict verdict-${escapeHtml(v.verdict)}">` +
        `<span class="verdict-label">${escapeHtml(v.verdict)}</span>` +
        `<span class="feedback">${escapeHtml(v.feedback)}</span>` +
        `</div>`,
    )
    .join("");

  return (
    `<div class="trace-panel" data-session-id="${escapeHtml(t.session_id)}">` +
    `<div class="trace-header">` +
    `<span class="trace-title">session ${escapeHtml(t.session_id)}</span>` +
    `<span class="trace-outcome">${escapeHtml(t.outcome)}</span>` +
    `refinements: <span class="refinement-counter">${t.refinement_count}</span>` +
    `<button data-action="close-trace">close</button>` +
    `</div>` +
    `<ol class="trace-steps">${steps}</ol>` +
    `<div class="trace-retrievals">${retrievals}</div>` +
    `<div class="trace-verdicts">${verdicts}</div>` +
    `</div>`
  );
}

export function renderCitePreview(preview: UnitPreview): string {
  if (preview.kind === "unknown") {
    return (
      `<div class="cite-preview">` +
      `<p class="preview-missing">source unavailable</p>` +
      `<code>${escapeHtml(preview.unitId)}</code>` +
      `</div>`
    );
  }
  const doc = `<div class="preview-doc">${escapeHtml(preview.docId)} &middot; <code>${escapeHtml(preview.unitId)}</code></div>`;
  if (preview.kind === "figure") {
    return (
      `<div class="cite-preview preview-figure">` +
      doc +
      `<span class="preview-kind">figure</span>` +
      `<div class="preview-caption">${escapeHtml(preview.caption)}</div>` +
      `<div class="preview-description">${escapeHtml(preview.description)}</div>` +
      `</div>`
    );
  }
  return (
    `<div class="cite-preview preview-text-unit">` +
    doc +
    `<pre class="preview-text">${escapeHtml(preview.content)}</pre>` +
    `</div>`
  );
}
