import type {
  AuditResponse,
  ModelsResponse,
  QueryResponse,
  StoredExample,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** Thin typed client over the server's JSON API. The fetch function is
 * injectable so tests can assert on outgoing requests. */
export class ApiClient {
  constructor(
    private baseUrl: string = "",
    private fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchFn(`${this.baseUrl}${path}`, init);
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        const body = await resp.json();
        if (body && typeof body.detail === "string") detail = body.detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(resp.status, detail);
    }
    return (await resp.json()) as T;
  }

  query(text: string, learningMode?: string): Promise<QueryResponse> {
    const payload: Record<string, string> = { query: text };
    if (learningMode) payload.learning_mode = learningMode;
    return this.request<QueryResponse>("/query", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  saveExample(sessionId: string): Promise<StoredExample> {
    return this.request<StoredExample>("/examples", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ session_id: sessionId }),
    });
  }

  exportUrl(exportId: string): string {
    return `${this.baseUrl}/export/${exportId}`;
  }

  async fetchExport(exportId: string): Promise<string> {
    const resp = await this.fetchFn(this.exportUrl(exportId));
    if (!resp.ok) throw new ApiError(resp.status, resp.statusText);
    return resp.text();
  }

  getModels(): Promise<ModelsResponse> {
    return this.request<ModelsResponse>("/models");
  }

  putModels(routes: Record<string, string>): Promise<ModelsResponse> {
    return this.request<ModelsResponse>("/models", {
      method: "PUT",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ routes }),
    });
  }

  getAudit(limit = 50): Promise<AuditResponse> {
    return this.request<AuditResponse>(`/audit?limit=${limit}`);
  }
}
