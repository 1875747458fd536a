/**
 * Wires the service client to the view state. All mutation funnels
 * through here; renderers and event wiring stay dumb.
 *
 * The transcript for a just-finished session may land on disk a beat
 * after /ask returns, so a 404 while an ask is still pending is retried
 * on a 1 s timer instead of being shown as expired. The poll stops as
 * soon as the panel closes, the user opens a different session's trace,
 * or the transcript arrives.
 */

import { ServiceClient, ServiceError } from "./api.js";
import {
  ChatViewState,
  acceptAnswer,
  beginSubmit,
  closeTrace,
  failSubmit,
  initialState,
  setQuote,
  showTraceExpired,
  showTraceLoading,
  showTraceReady,
} from "./state.js";

const POLL_INTERVAL_MS = 1000;

export interface ControllerOptions {
  mode?: string;
  onChange?: (state: ChatViewState) => void;
}

export class ChatController {
  state: ChatViewState;
  private readonly client: ServiceClient;
  private readonly opts: ControllerOptions;
  private pollTimer: ReturnType<typeof setTimeout> | null = null;

  constructor(client: ServiceClient, opts: ControllerOptions = {}) {
    this.client = client;
    this.opts = opts;
    this.state = initialState();
  }

  private update(next: ChatViewState): void {
    this.state = next;
    this.opts.onChange?.(next);
  }

  /** Returns false when the submit was refused (empty text or busy). */
  async submit(text: string): Promise<boolean> {
    const decision = beginSubmit(this.state, text);
    this.update(decision.state);
    if (!decision.ok) {
      return false;
    }
    await this.runAsk(decision.query);
    return true;
  }

  /** Re-run a query from a failed turn, bypassing quote composition. */
  async retry(query: string): Promise<boolean> {
    if (this.state.pending || !query.trim()) {
      return false;
    }
    this.update({
      ...this.state,
      pending: true,
      turns: [...this.state.turns, { kind: "user", text: query }],
    });
    await this.runAsk(query);
    return true;
  }

  private async runAsk(query: string): Promise<void> {
    try {
      const response = await this.client.ask(query, { mode: this.opts.mode });
      this.update(acceptAnswer(this.state, response));
    } catch (err) {
      if (err instanceof ServiceError) {
        const hint = err.status === 400;
        this.update(failSubmit(this.state, err.message, query, hint));
      } else {
        const msg = err instanceof Error ? err.message : String(err);
        this.update(failSubmit(this.state, msg, query, false));
      }
    }
  }

  openTrace(sessionId: string): Promise<void> {
    this.stopPoll();
    this.update(showTraceLoading(this.state, sessionId));
    return this.fetchTrace(sessionId);
  }

  private async fetchTrace(sessionId: string): Promise<void> {
    let transcript;
    try {
      transcript = await this.client.transcript(sessionId);
    } catch (err) {
      if (this.state.trace?.sessionId !== sessionId) {
        return; // user moved on; nothing to show
      }
      if (err instanceof ServiceError && err.status === 404) {
        if (this.state.pending) {
          this.pollTimer = setTimeout(() => {
            this.pollTimer = null;
            void this.fetchTrace(sessionId);
          }, POLL_INTERVAL_MS);
        } else {
          this.update(showTraceExpired(this.state, sessionId));
        }
        return;
      }
      this.update(showTraceExpired(this.state, sessionId));
      return;
    }
    this.update(showTraceReady(this.state, transcript));
  }

  closeTrace(): void {
    this.stopPoll();
    this.update(closeTrace(this.state));
  }

  /** "quote previous answer": prefix the next question with this text. */
  quoteAnswer(text: string): void {
    this.update(setQuote(this.state, text));
  }

  /** Cancel timers when the view goes away. */
  dispose(): void {
    this.stopPoll();
  }

  private stopPoll(): void {
    if (this.pollTimer !== null) {
      clearTimeout(this.pollTimer);
      this.pollTimer = null;
    }
  }
}
