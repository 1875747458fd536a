/**
 * Thin client for the question-answering service. fetch is injected so
 * tests can run against a scripted service with no sockets involved.
 */

import type { AskResponse, ErrorBody, HealthResponse, Transcript } from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ServiceError extends Error {
  readonly status: number;
  readonly code: string;
  readonly detail: unknown;

  constructor(status: number, code: string, message: string, detail: unknown = null) {
    super(message);
    this.name = "ServiceError";
    this.status = status;
    this.code = code;
    this.detail = detail;
  }

  /** Network trouble and 5xx are worth retrying; 4xx means fix the input. */
  get retryable(): boolean {
    return this.status === 0 || this.status >= 500;
  }
}

export class ServiceClient {
  private readonly base: string;
  private readonly fetchImpl: FetchLike;

  constructor(baseUrl: string, fetchImpl?: FetchLike) {
    this.base = baseUrl.replace(/\/+$/, "");
    // bind so a bare window.fetch keeps its receiver
    const impl = fetchImpl ?? (globalThis.fetch as FetchLike);
    this.fetchImpl = (url, init) => impl(url, init);
  }

  async ask(query: string, opts: { mode?: string } = {}): Promise<AskResponse> {
    const body: Record<string, unknown> = { query };
    if (opts.mode !== undefined) body.mode = opts.mode;
    return this.request<AskResponse>("POST", "/v1/ask", body);
  }

  async transcript(sessionId: string): Promise<Transcript> {
    return this.request<Transcript>(
      "GET",
      `/v1/sessions/${encodeURIComponent(sessionId)}/transcript`,
    );
  }

  async health(): Promise<HealthResponse> {
    return this.request<HealthResponse>("GET", "/v1/health");
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { "Content-Type": "application/json" };
      init.body = JSON.stringify(body);
    }
    let response: Response;
    try {
      response = await this.fetchImpl(this.base + path, init);
    } catch (err) {
      const msg = err instanceof Error ? err.message : String(err);
      throw new ServiceError(0, "network", `service unreachable: ${msg}`);
    }
    if (!response.ok) {
      throw await this.toError(response);
    }
    return (await response.json()) as T;
  }

  private async toError(response: Response): Promise<ServiceError> {
    let parsed: Partial<ErrorBody> | null = null;
    try {
      parsed = (await response.json()) as Partial<ErrorBody>;
    } catch {
      parsed = null;
    }
    if (parsed && typeof parsed.code === "string" && typeof parsed.message === "string") {
      return new ServiceError(response.status, parsed.code, parsed.message, parsed.detail ?? null);
    }
    return new ServiceError(response.status, `http_${response.status}`, response.statusText || "request failed");
  }
}
