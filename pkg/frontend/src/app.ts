/** Browser entry point: wires the chart, architecture tree, and meta form to
 * the control API. Stateless by construction: a refresh rebuilds the whole
 * view from /status, /architecture, /history, and the event stream.
 */
import { ApiClient, ApiError, followHistory } from "./api.js";
import { renderArchitecture } from "./archview.js";
import { renderHistoryChart } from "./chart.js";
import {
  appliedAtIteration,
  parseMetaInputs,
  renderMetaForm,
  staleFields,
  validateMeta,
} from "./form.js";
import { MetaParams, StatusSnapshot } from "./types.js";

const client = new ApiClient("");

const el = (id: string) => document.getElementById(id) as HTMLElement;

let shownMeta: MetaParams | null = null;
let submitted: Partial<MetaParams> | null = null;
let lastStatus: StatusSnapshot | null = null;

function setBanner(up: boolean): void {
  const banner = el("banner");
  banner.classList.toggle("hidden", up);
  banner.textContent = up ? "" : "API unreachable - showing last known data";
}

function renderStatusLine(status: StatusSnapshot): void {
  const acc = status.test_acc !== null ? `test acc ${(status.test_acc * 100).toFixed(2)}%`
    : status.test_loss !== null ? `test loss ${status.test_loss.toFixed(4)}` : "no metrics yet";
  el("status-line").textContent =
    `iteration ${status.iteration}, epoch ${status.epoch}, phase ${status.phase}, ` +
    `${status.param_count} params, depth ${status.depth}, ${acc}` +
    (status.fitted_a !== null ? `, curve a=${status.fitted_a.toFixed(2)}` : "") +
    (status.running ? "" : " (stopped)");
}

function mountForm(meta: MetaParams): void {
  shownMeta = { ...meta };
  el("meta-form").innerHTML = renderMetaForm(meta);
  const form = el("meta-form").querySelector("form") as HTMLFormElement;
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    void submitForm(form);
  });
}

function showFieldErrors(form: HTMLFormElement, problems: Record<string, string>): void {
  for (const span of form.querySelectorAll(".field-error")) {
    const field = (span as HTMLElement).dataset.errorFor ?? "";
    span.textContent = problems[field] ?? "";
  }
}

async function submitForm(form: HTMLFormElement): Promise<void> {
  const raw: Record<string, string> = {};
  for (const input of form.querySelectorAll("input")) {
    raw[input.name] = input.value;
  }
  const update = parseMetaInputs(raw);
  const problems = validateMeta(update);
  const statusSpan = form.querySelector(".form-status") as HTMLElement;
  showFieldErrors(form, problems);
  if (Object.keys(problems).length > 0) {
    statusSpan.textContent = "fix the highlighted fields";
    return;
  }
  if (lastStatus && shownMeta) {
    const stale = staleFields(update, shownMeta, lastStatus.meta);
    if (stale.length > 0 && !form.dataset.confirmedStale) {
      statusSpan.textContent =
        `changed on the server meanwhile: ${stale.join(", ")} - submit again to override`;
      form.dataset.confirmedStale = "1";
      return;
    }
  }
  delete form.dataset.confirmedStale;
  try {
    await client.postMeta(update);
    submitted = update;
    statusSpan.textContent = "accepted - waiting for the next boundary";
  } catch (err) {
    if (err instanceof ApiError && typeof err.detail === "object" && err.detail) {
      showFieldErrors(form, err.detail as Record<string, string>);
      statusSpan.textContent = "rejected by the server";
    } else {
      statusSpan.textContent = "request failed";
    }
  }
}

async function refreshSlow(): Promise<void> {
  try {
    const [status, architecture] = await Promise.all([
      client.getStatus(),
      client.getArchitecture(),
    ]);
    lastStatus = status;
    setBanner(true);
    renderStatusLine(status);
    el("architecture").innerHTML = renderArchitecture(architecture);
    if (shownMeta === null) {
      mountForm(status.meta);
    }
    if (submitted) {
      const at = appliedAtIteration(submitted, status);
      if (at !== null) {
        const span = document.querySelector(".form-status") as HTMLElement | null;
        if (span) span.textContent = `applied at iteration ${at}`;
        submitted = null;
        mountForm(status.meta);
      }
    }
  } catch {
    setBanner(false);
  }
}

followHistory(
  client,
  (events) => {
    el("chart").innerHTML = renderHistoryChart(events);
  },
  (up) => setBanner(up),
);

void refreshSlow();
setInterval(refreshSlow, 2000);
