/** Meta-parameter form: client-side validation mirroring the server's rules,
 * HTML rendering, and the bookkeeping for "applied at iteration N" and
 * stale-form warnings. Changes are explicit-submit because the engine applies
 * structural values only at iteration boundaries.
 */
import { MetaParams, StatusSnapshot } from "./types.js";

export const META_FIELDS: Array<keyof MetaParams> = [
  "neurons_to_add",
  "prune_count",
  "prune_ratio",
  "learning_rate",
  "max_train_epochs",
  "decay_epochs",
];

/** Same constraints the server enforces; returns {} when valid. */
export function validateMeta(update: Partial<MetaParams>): Record<string, string> {
  const problems: Record<string, string> = {};
  const integral = (v: unknown) => typeof v === "number" && Number.isInteger(v);
  if (update.neurons_to_add !== undefined &&
      (!integral(update.neurons_to_add) || update.neurons_to_add < 0)) {
    problems.neurons_to_add = "must be an integer >= 0";
  }
  if (update.prune_count !== undefined &&
      (!integral(update.prune_count) || update.prune_count < 0)) {
    problems.prune_count = "must be an integer >= 0";
  }
  if (update.prune_ratio !== undefined && update.prune_ratio !== null &&
      (typeof update.prune_ratio !== "number" ||
       update.prune_ratio < 0 || update.prune_ratio > 1)) {
    problems.prune_ratio = "must be in [0, 1]";
  }
  if (update.learning_rate !== undefined &&
      (typeof update.learning_rate !== "number" || !(update.learning_rate > 0))) {
    problems.learning_rate = "must be > 0";
  }
  if (update.max_train_epochs !== undefined &&
      (!integral(update.max_train_epochs) || update.max_train_epochs < 1)) {
    problems.max_train_epochs = "must be an integer >= 1";
  }
  if (update.decay_epochs !== undefined &&
      (!integral(update.decay_epochs) || update.decay_epochs < 0)) {
    problems.decay_epochs = "must be an integer >= 0";
  }
  return problems;
}

/** Parse a form's raw string values into a typed update. */
export function parseMetaInputs(raw: Record<string, string>): Partial<MetaParams> {
  const update: Record<string, number | null> = {};
  for (const field of META_FIELDS) {
    if (!(field in raw)) continue;
    const text = raw[field].trim();
    if (text === "") {
      if (field === "prune_ratio") update[field] = null;
      continue;
    }
    update[field] = Number(text);
  }
  return update as Partial<MetaParams>;
}

export function renderMetaForm(current: MetaParams): string {
  const row = (field: keyof MetaParams, label: string, step: string) => {
    const value = current[field];
    return (
      `<label class="meta-row" data-field="${field}">${label}` +
      `<input name="${field}" value="${value === null ? "" : value}" ` +
      `inputmode="decimal" step="${step}"/>` +
      `<span class="field-error" data-error-for="${field}"></span></label>`
    );
  };
  return (
    `<form class="meta-form">` +
    row("neurons_to_add", "neurons to add", "1") +
    row("prune_count", "neurons to remove", "1") +
    row("prune_ratio", "remove ratio (overrides count)", "0.05") +
    row("learning_rate", "learning rate", "any") +
    row("max_train_epochs", "max train epochs", "1") +
    row("decay_epochs", "decay epochs", "1") +
    `<button type="submit">apply at next iteration</button>` +
    `<span class="form-status"></span></form>`
  );
}

/** Fields the server changed while the operator was editing. */
export function staleFields(
  formValues: Partial<MetaParams>,
  shownAtLoad: MetaParams,
  nowOnServer: MetaParams,
): Array<keyof MetaParams> {
  return META_FIELDS.filter(
    (field) =>
      shownAtLoad[field] !== nowOnServer[field] &&
      formValues[field] !== nowOnServer[field],
  );
}

/** Once the engine's status reflects a submitted update, report the
 * iteration it took effect at; null while still pending. */
export function appliedAtIteration(
  submitted: Partial<MetaParams>,
  status: StatusSnapshot,
): number | null {
  for (const field of META_FIELDS) {
    if (submitted[field] !== undefined && status.meta[field] !== submitted[field]) {
      return null;
    }
  }
  return status.iteration;
}
