/**
 * Citation previews. The service exposes no per-unit endpoint; the one
 * place full source text travels over the wire is the generator step's
 * input in the transcript, where each hit is rendered as
 *
 *   [source: {doc_id} / {unit_id}]
 *   {chunk text | Caption: ... / Description: ...}
 *
 * joined by blank lines. Extracting from there shows the reader exactly
 * the evidence the answer was generated from. A chunk containing a line
 * that itself looks like a source header would truncate its preview;
 * that ambiguity is inherent to the context format.
 */

import type { Transcript } from "./types.js";

export type UnitPreview =
  | { kind: "text"; docId: string; unitId: string; content: string }
  | { kind: "figure"; docId: string; unitId: string; caption: string; description: string }
  | { kind: "unknown"; unitId: string };

const HEADER = /^\[source: (.+?) \/ (.+?)\]$/gm;

export function extractUnitPreview(transcript: Transcript, unitId: string): UnitPreview {
  const generatorInputs = transcript.steps
    .filter((s) => s.role === "generator")
    .map((s) => s.input)
    .reverse(); // newest context first; it fed the displayed answer

  for (const input of generatorInputs) {
    const found = findBlock(input, unitId);
    if (found !== null) {
      return found;
    }
  }
  return { kind: "unknown", unitId };
}

function findBlock(input: string, unitId: string): UnitPreview | null {
  HEADER.lastIndex = 0;
  const headers: Array<{ docId: string; unitId: string; start: number; bodyStart: number }> = [];
  let m: RegExpExecArray | null;
  while ((m = HEADER.exec(input)) !== null) {
    headers.push({
      docId: m[1],
      unitId: m[2],
      start: m.index,
      bodyStart: m.index + m[0].length + 1, // skip the newline after the header
    });
  }
  for (let i = 0; i < headers.length; i++) {
    if (headers[i].unitId !== unitId) continue;
    const next = headers[i + 1];
    // blocks are joined by exactly "\n\n"; strip only that joiner
    const end = next === undefined ? input.length : next.start - 2;
    const body = input.slice(headers[i].bodyStart, Math.max(end, headers[i].bodyStart));
    return classify(headers[i].docId, unitId, body);
  }
  return null;
}

function classify(docId: string, unitId: string, body: string): UnitPreview {
  if (unitId.includes(":figure:") && body.startsWith("Caption: ")) {
    const split = body.indexOf("\nDescription: ");
    if (split !== -1) {
      return {
        kind: "figure",
        docId,
        unitId,
        caption: body.slice("Caption: ".length, split),
        description: body.slice(split + "\nDescription: ".length),
      };
    }
  }
  return { kind: "text", docId, unitId, content: body };
}
