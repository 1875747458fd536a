/**
 * Browser entry: binds a ChatController to a root element. Kept as thin
 * as possible; everything worth testing lives in the modules this file
 * glues together.
 */

import { ServiceClient } from "./api.js";
import { ChatController } from "./controller.js";
import { extractUnitPreview } from "./preview.js";
import { renderCitePreview, renderTrace, renderTurns } from "./render.js";
import type { ChatViewState } from "./state.js";
import type { Transcript } from "./types.js";

const LAYOUT = `
  <div class="chat-root">
    <div class="chat-turns" data-region="turns"></div>
    <div class="cite-popover" data-region="preview" hidden></div>
    <form class="chat-form" data-region="form">
      <input type="text" name="query" autocomplete="off" placeholder="Ask about the corpus..." />
      <button type="submit" data-region="send">ask</button>
    </form>
    <aside class="chat-trace" data-region="trace"></aside>
  </div>
`;

export function mountChat(root: HTMLElement, baseUrl: string): () => void {
  const client = new ServiceClient(baseUrl);
  root.innerHTML = LAYOUT;
  const turnsEl = root.querySelector<HTMLElement>('[data-region="turns"]')!;
  const traceEl = root.querySelector<HTMLElement>('[data-region="trace"]')!;
  const previewEl = root.querySelector<HTMLElement>('[data-region="preview"]')!;
  const form = root.querySelector<HTMLFormElement>('[data-region="form"]')!;
  const input = form.querySelector<HTMLInputElement>("input")!;
  const sendButton = root.querySelector<HTMLButtonElement>('[data-region="send"]')!;

  const transcripts = new Map<string, Transcript>();

  const controller = new ChatController(client, {
    onChange: (state: ChatViewState) => {
      turnsEl.innerHTML = renderTurns(state.turns);
      traceEl.innerHTML = renderTrace(state.trace);
      sendButton.disabled = state.pending;
      if (state.trace?.status === "ready") {
        transcripts.set(state.trace.sessionId, state.trace.transcript);
      }
      turnsEl.scrollTop = turnsEl.scrollHeight;
    },
  });

  const onSubmit = (event: Event) => {
    event.preventDefault();
    const text = input.value;
    void controller.submit(text).then((accepted) => {
      if (accepted) input.value = "";
    });
  };

  const onClick = (event: Event) => {
    const target = (event.target as HTMLElement).closest<HTMLElement>("[data-action], .chip");
    if (!target) return;
    if (target.classList.contains("chip")) {
      const unitId = target.dataset.unitId ?? "";
      const sessionId = target.closest<HTMLElement>("[data-session-id]")?.dataset.sessionId ?? "";
      void showPreview(sessionId, unitId);
      return;
    }
    switch (target.dataset.action) {
      case "open-trace":
        void controller.openTrace(target.dataset.sessionId ?? "");
        break;
      case "close-trace":
        controller.closeTrace();
        break;
      case "retry":
        void controller.retry(target.dataset.query ?? "");
        break;
      case "quote": {
        const sid = target.dataset.sessionId ?? "";
        const turn = controller.state.turns.find(
          (t) => t.kind === "assistant" && t.sessionId === sid,
        );
        if (turn && turn.kind === "assistant") {
          controller.quoteAnswer(turn.answer);
          input.focus();
        }
        break;
      }
    }
  };

  async function showPreview(sessionId: string, unitId: string): Promise<void> {
    let transcript = transcripts.get(sessionId);
    if (!transcript) {
      try {
        transcript = await client.transcript(sessionId);
        transcripts.set(sessionId, transcript);
      } catch {
        previewEl.innerHTML = renderCitePreview({ kind: "unknown", unitId });
        previewEl.hidden = false;
        return;
      }
    }
    previewEl.innerHTML = renderCitePreview(extractUnitPreview(transcript, unitId));
    previewEl.hidden = false;
  }

  const onPreviewDismiss = (event: Event) => {
    if (!previewEl.contains(event.target as Node)) {
      previewEl.hidden = true;
    }
  };

  form.addEventListener("submit", onSubmit);
  root.addEventListener("click", onClick);
  document.addEventListener("click", onPreviewDismiss, true);

  return () => {
    controller.dispose();
    form.removeEventListener("submit", onSubmit);
    root.removeEventListener("click", onClick);
    document.removeEventListener("click", onPreviewDismiss, true);
  };
}
