// Response shapes of the knowledge-base HTTP API. The console renders
// these verbatim; it never constructs SQL or derives state client-side.

export interface SafetyVerdict {
  allowed: boolean;
  rule: string;
  fragment: string;
  reason: string;
}

export interface SqlCandidate {
  sql: string;
  origin: "generated" | "repaired";
  safety: SafetyVerdict | null;
  outcome: "executed" | "denied" | "error" | "";
  error: string;
}

export interface ResultSummary {
  columns: string[];
  row_count: number;
  truncated: boolean;
}

export interface SessionTrace {
  id: string;
  user_query: string;
  intent: string | null;
  candidates: SqlCandidate[];
  result: ResultSummary | null;
  validation: string;
  answer: unknown;
  export_id: string | null;
  summary: string;
  succeeded: boolean;
  failure_reason: string;
  audit_entry_id: number | null;
  duration_ms: number;
}

export interface QueryResponse {
  session_id: string;
  intent: string | null;
  validation: string;
  succeeded: boolean;
  storable: boolean;
  stored_example: StoredExample | null;
  trace: SessionTrace;
  answer?: unknown;
  export_id?: string;
}

export interface StoredExample {
  id: number;
  query_text: string;
  key_fields: string[];
  sql: string;
  result_fingerprint: string;
  mode: string;
  created_at: number;
}

export interface ModelsResponse {
  routes: Record<string, string>;
}

export interface AuditEntry {
  id: number;
  session_id: string;
  created_at: number;
  user_query: string;
  intent: string | null;
  sql: string | null;
  outcome: string;
  failure_reason: string | null;
  result_fingerprint: string | null;
  row_count: number | null;
  duration_ms: number;
  trace: Partial<SessionTrace>;
}

export interface AuditResponse {
  entries: AuditEntry[];
}
