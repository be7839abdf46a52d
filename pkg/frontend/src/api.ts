/**
 * Thin service client. One mutation may be in flight at a time; callers
 * are expected to gate on ViewState.pending, and the client enforces it
 * as a backstop so a double-click can never race two generations.
 */

import type {
  ApiErrorJson,
  GenerationMode,
  SelectionTemplate,
  SessionJson,
} from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  readonly code: ApiErrorJson["code"];

  constructor(payload: ApiErrorJson) {
    super(payload.message);
    this.code = payload.code;
  }
}

export class ServiceClient {
  private busy = false;

  constructor(
    private readonly base: string,
    private readonly fetchImpl: FetchLike,
  ) {}

  get pending(): boolean {
    return this.busy;
  }

  private async call<T>(method: string, path: string, body?: unknown): Promise<T> {
    if (this.busy) {
      throw new Error("a request is already in flight");
    }
    this.busy = true;
    try {
      const init: RequestInit = { method };
      if (body !== undefined) {
        init.headers = { "Content-Type": "application/json" };
        init.body = JSON.stringify(body);
      }
      const response = await this.fetchImpl(this.base + path, init);
      const payload = await response.json();
      if (!response.ok) {
        throw new ApiError(payload as ApiErrorJson);
      }
      return payload as T;
    } finally {
      this.busy = false;
    }
  }

  createSession(documentText: string): Promise<SessionJson> {
    return this.call("POST", "/sessions", { document: documentText });
  }

  getSession(id: string): Promise<SessionJson> {
    return this.call("GET", `/sessions/${id}`);
  }

  setSelection(id: string, sentences: number[]): Promise<SessionJson> {
    return this.call("POST", `/sessions/${id}/selection`, { sentences });
  }

  applyTemplate(id: string, template: SelectionTemplate): Promise<SessionJson> {
    return this.call("POST", `/sessions/${id}/selection`, { template });
  }

  generate(
    id: string,
    mode: GenerationMode,
    options: { n_sentences?: number; prefix?: string } = {},
  ): Promise<SessionJson> {
    return this.call("POST", `/sessions/${id}/generate`, { mode, ...options });
  }

  editSummary(id: string, index: number, text: string): Promise<SessionJson> {
    return this.call("POST", `/sessions/${id}/summary/${index}`, {
      action: "edit",
      text,
    });
  }

  deleteSummary(id: string, index: number): Promise<SessionJson> {
    return this.call("POST", `/sessions/${id}/summary/${index}`, {
      action: "delete",
    });
  }
}
