import { ApiClient, ApiError } from "./api.js";
import { renderAudit, renderModels, renderSession } from "./render.js";

/** Single-page console: query, models, and audit screens over the
 * server's JSON API. All state is server-derived; the only optimistic
 * update is the save-example button, which rolls back on failure. */
export function mountApp(root: HTMLElement, api: ApiClient): void {
  const doc = root.ownerDocument;
  root.replaceChildren();

  const nav = doc.createElement("nav");
  const screens: Record<string, HTMLElement> = {};
  for (const name of ["query", "models", "audit"]) {
    const button = doc.createElement("button");
    button.textContent = name;
    button.dataset.screen = name;
    button.addEventListener("click", () => showScreen(name));
    nav.appendChild(button);
    const panel = doc.createElement("section");
    panel.dataset.panel = name;
    panel.hidden = name !== "query";
    screens[name] = panel;
  }
  root.appendChild(nav);

  function showScreen(name: string): void {
    for (const [key, panel] of Object.entries(screens)) {
      panel.hidden = key !== name;
    }
    if (name === "models") void loadModels();
    if (name === "audit") void loadAudit();
  }

  // -- query screen --------------------------------------------------
  const form = doc.createElement("form");
  const input = doc.createElement("input");
  input.type = "text";
  input.placeholder = "Ask the knowledge base…";
  const run = doc.createElement("button");
  run.type = "submit";
  run.textContent = "Run";
  form.append(input, run);
  const status = doc.createElement("div");
  status.className = "status";
  const sessionView = doc.createElement("div");
  sessionView.className = "session-view";
  screens.query.append(form, status, sessionView);

  let inFlight = false; // one query at a time per tab
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    if (inFlight || !input.value.trim()) return;
    inFlight = true;
    run.disabled = true;
    status.textContent = "Running…";
    api
      .query(input.value.trim())
      .then((body) => {
        status.textContent = "";
        renderSession(sessionView, body, {
          exportUrl: (id) => api.exportUrl(id),
          onSave: (sessionId, button) => saveExample(sessionId, button),
        });
      })
      .catch((err: unknown) => {
        status.textContent =
          err instanceof ApiError ? err.message : "request failed";
      })
      .finally(() => {
        inFlight = false;
        run.disabled = false;
      });
  });

  function saveExample(sessionId: string, button: HTMLButtonElement): void {
    const original = button.textContent ?? "";
    button.textContent = "Saved ✓"; // optimistic
    button.disabled = true;
    api.saveExample(sessionId).catch((err: unknown) => {
      button.textContent = original; // rollback
      button.disabled = false;
      status.textContent =
        err instanceof ApiError ? `save failed: ${err.detail}` : "save failed";
    });
  }

  // -- models screen --------------------------------------------------
  async function loadModels(): Promise<void> {
    const body = await api.getModels();
    renderModels(screens.models, body.routes, (routes) => {
      void api
        .putModels(routes)
        .then((updated) => renderModels(screens.models, updated.routes))
        .catch((err: unknown) => {
          status.textContent =
            err instanceof ApiError ? err.message : "update failed";
        });
    });
  }

  // -- audit screen ---------------------------------------------------
  async function loadAudit(): Promise<void> {
    const body = await api.getAudit();
    renderAudit(screens.audit, body.entries);
  }

  for (const panel of Object.values(screens)) root.appendChild(panel);
}

declare global {
  interface Window {
    __MATKB_BASE_URL__?: string;
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  mountApp(
    document.getElementById("app") as HTMLElement,
    new ApiClient(window.__MATKB_BASE_URL__ ?? ""),
  );
}
