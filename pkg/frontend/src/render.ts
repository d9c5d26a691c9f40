import type {
  AuditEntry,
  QueryResponse,
  SqlCandidate,
} from "./types.js";

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export interface SessionHandlers {
  onSave?: (sessionId: string, button: HTMLButtonElement) => void;
  exportUrl?: (exportId: string) => string;
}

function deniedCandidate(body: QueryResponse): SqlCandidate | undefined {
  return body.trace.candidates.find((c) => c.outcome === "denied");
}

/** Render one query session: intent badge, denial banner (when a safety
 * verdict denied a candidate), answer panel or download link, trace
 * timeline with the failing step highlighted, and — only for storable
 * sessions — the save-example button. */
export function renderSession(
  container: HTMLElement,
  body: QueryResponse,
  handlers: SessionHandlers = {},
): void {
  const doc = container.ownerDocument;
  container.replaceChildren();
  const root = el(doc, "section", "session");

  const header = el(doc, "header", "session-header");
  const badge = el(
    doc,
    "span",
    `badge badge-${body.intent ?? "unknown"}`,
    body.intent ?? "unknown",
  );
  badge.dataset.role = "intent-badge";
  header.appendChild(badge);
  header.appendChild(
    el(doc, "span", "session-query", body.trace.user_query),
  );
  root.appendChild(header);

  const denied = deniedCandidate(body);
  if (denied && denied.safety) {
    const banner = el(doc, "div", "denial-banner");
    banner.dataset.role = "denial-banner";
    banner.appendChild(el(doc, "strong", "denial-rule", denied.safety.rule));
    banner.appendChild(
      el(doc, "span", "denial-reason", ` query denied: ${denied.safety.reason}`),
    );
    root.appendChild(banner);
  } else if (!body.succeeded && body.trace.failure_reason) {
    const banner = el(doc, "div", "failure-banner", body.trace.failure_reason);
    banner.dataset.role = "failure-banner";
    root.appendChild(banner);
  }

  const answer = el(doc, "div", "answer-panel");
  answer.dataset.role = "answer-panel";
  if (body.succeeded && body.answer !== undefined && body.answer !== null) {
    answer.appendChild(el(doc, "span", "answer-value", String(body.answer)));
  } else if (body.succeeded && body.export_id) {
    const link = el(doc, "a", "export-link", "Download CSV");
    link.dataset.role = "export-link";
    link.href = handlers.exportUrl
      ? handlers.exportUrl(body.export_id)
      : `/export/${body.export_id}`;
    link.setAttribute("download", `${body.export_id}.csv`);
    answer.appendChild(link);
    if (body.trace.result) {
      answer.appendChild(
        el(
          doc,
          "span",
          "export-meta",
          ` ${body.trace.result.row_count} rows` +
            (body.trace.result.truncated ? " (truncated)" : ""),
        ),
      );
    }
  } else {
    answer.appendChild(el(doc, "span", "answer-none", "No answer"));
  }
  root.appendChild(answer);

  if (body.storable) {
    const save = el(doc, "button", "save-example", "Save as example");
    save.dataset.role = "save-example";
    save.dataset.sessionId = body.session_id;
    save.addEventListener("click", () => {
      if (handlers.onSave) handlers.onSave(body.session_id, save);
    });
    root.appendChild(save);
  }
  if (body.stored_example) {
    root.appendChild(
      el(doc, "div", "stored-note", `Stored as example #${body.stored_example.id}`),
    );
  }

  root.appendChild(renderTimeline(doc, body));
  container.appendChild(root);
}

function renderTimeline(doc: Document, body: QueryResponse): HTMLElement {
  const timeline = el(doc, "ol", "trace-timeline");
  timeline.dataset.role = "trace-timeline";

  const routeStep = el(doc, "li", "step step-route");
  routeStep.appendChild(el(doc, "span", "step-name", "route"));
  routeStep.appendChild(
    el(doc, "span", "step-detail", `intent: ${body.intent ?? "unknown"}`),
  );
  if (body.intent === "unsupported") routeStep.classList.add("step-failed");
  timeline.appendChild(routeStep);

  for (const candidate of body.trace.candidates) {
    const step = el(doc, "li", `step step-${candidate.origin}`);
    step.appendChild(el(doc, "span", "step-name", candidate.origin));
    step.appendChild(el(doc, "code", "step-sql", candidate.sql));
    const verdict = candidate.safety
      ? candidate.safety.allowed
        ? "allowed"
        : `denied (${candidate.safety.rule})`
      : "unchecked";
    step.appendChild(el(doc, "span", "step-verdict", verdict));
    step.appendChild(el(doc, "span", "step-outcome", candidate.outcome));
    if (candidate.outcome === "denied" || candidate.outcome === "error") {
      step.classList.add("step-failed");
      if (candidate.error) {
        step.appendChild(el(doc, "span", "step-error", candidate.error));
      }
    }
    timeline.appendChild(step);
  }

  if (body.trace.validation) {
    const step = el(doc, "li", "step step-validate");
    step.appendChild(el(doc, "span", "step-name", "validate"));
    step.appendChild(el(doc, "span", "step-detail", body.trace.validation));
    if (body.trace.validation !== "aligned") step.classList.add("step-failed");
    timeline.appendChild(step);
  }

  if (body.trace.summary) {
    const step = el(doc, "li", "step step-summarize");
    step.appendChild(el(doc, "span", "step-name", "summarize"));
    step.appendChild(el(doc, "span", "step-detail", body.trace.summary));
    timeline.appendChild(step);
  }
  return timeline;
}

export function renderModels(
  container: HTMLElement,
  routes: Record<string, string>,
  onSubmit?: (routes: Record<string, string>) => void,
): void {
  const doc = container.ownerDocument;
  container.replaceChildren();
  const form = el(doc, "form", "models-form");
  form.dataset.role = "models-form";
  for (const [role, model] of Object.entries(routes)) {
    const row = el(doc, "label", "model-row");
    row.appendChild(el(doc, "span", "model-role", role));
    const input = el(doc, "input", "model-input");
    input.name = role;
    input.value = model;
    row.appendChild(input);
    form.appendChild(row);
  }
  const submit = el(doc, "button", "models-submit", "Apply");
  submit.type = "submit";
  form.appendChild(submit);
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const updated: Record<string, string> = {};
    form.querySelectorAll("input").forEach((input) => {
      updated[input.name] = input.value;
    });
    if (onSubmit) onSubmit(updated);
  });
  container.appendChild(form);
}

export function renderAudit(container: HTMLElement, entries: AuditEntry[]): void {
  const doc = container.ownerDocument;
  container.replaceChildren();
  const table = el(doc, "table", "audit-table");
  table.dataset.role = "audit-table";
  const head = el(doc, "tr");
  for (const col of ["when", "query", "intent", "outcome", "sql"]) {
    head.appendChild(el(doc, "th", undefined, col));
  }
  table.appendChild(head);
  for (const entry of entries) {
    const row = el(doc, "tr", `audit-row audit-${entry.outcome}`);
    row.appendChild(
      el(doc, "td", "audit-when", new Date(entry.created_at * 1000).toISOString()),
    );
    row.appendChild(el(doc, "td", "audit-query", entry.user_query));
    row.appendChild(el(doc, "td", "audit-intent", entry.intent ?? ""));
    row.appendChild(el(doc, "td", "audit-outcome", entry.outcome));
    row.appendChild(el(doc, "td", "audit-sql", entry.sql ?? ""));
    table.appendChild(row);
  }
  container.appendChild(table);
}
