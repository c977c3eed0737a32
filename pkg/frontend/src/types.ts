/** Wire types for the control API, plus the architecture schema walker. */

export interface MetaParams {
  neurons_to_add: number;
  prune_count: number;
  prune_ratio: number | null;
  learning_rate: number;
  max_train_epochs: number;
  decay_epochs: number;
}

export interface HistoryEvent {
  time: number;
  epoch: number;
  iteration: number;
  phase: string;
  train_loss: number;
  train_acc: number | null;
  test_loss: number;
  test_acc: number | null;
  param_count: number;
  depth: number;
  learning_rate: number;
}

export interface StatusSnapshot {
  iteration: number;
  epoch: number;
  phase: string;
  param_count: number;
  depth: number;
  meta: MetaParams;
  train_loss: number | null;
  train_acc: number | null;
  test_loss: number | null;
  test_acc: number | null;
  fitted_a: number | null;
  running: boolean;
}

export interface LinearNodeDoc {
  kind: "linear";
  fan_in: number;
  fan_out: number;
  params: number;
}

export interface ResidualNodeDoc {
  kind: "residual";
  layer_id: number;
  fan_in: number;
  fan_out: number;
  hidden: number;
  dropout_p: number;
  decaying: number;
  shortcut: LinearNodeDoc;
  inner0: ArchNodeDoc;
  inner1: ArchNodeDoc;
}

export type ArchNodeDoc = LinearNodeDoc | ResidualNodeDoc;

export interface ArchitectureDoc {
  loss: string;
  input_dim: number;
  output_dim: number;
  param_count: number;
  depth: number;
  blocks: ArchNodeDoc[];
}

export type StreamEvent =
  | ({ type: "history" } & HistoryEvent)
  | { type: "phase"; phase: string; iteration: number; epoch: number }
  | { type: "meta"; epoch: number; meta: MetaParams }
  | { type: "warning"; message: string; epoch?: number }
  | { type: "hello"; cursor: number }
  | { type: "gap" };

export class SchemaError extends Error {
  constructor(public path: string, message: string) {
    super(`schema violation at ${path}: ${message}`);
  }
}

function requireInt(doc: Record<string, unknown>, key: string, path: string): void {
  const value = doc[key];
  if (typeof value !== "number" || !Number.isInteger(value) || value < 0) {
    throw new SchemaError(`${path}.${key}`, "expected a nonnegative integer");
  }
}

function checkNode(node: unknown, path: string): void {
  if (typeof node !== "object" || node === null) {
    throw new SchemaError(path, "expected an object");
  }
  const doc = node as Record<string, unknown>;
  if (doc.kind === "linear") {
    for (const key of ["fan_in", "fan_out", "params"]) requireInt(doc, key, path);
    return;
  }
  if (doc.kind === "residual") {
    for (const key of ["fan_in", "fan_out", "hidden", "layer_id"]) {
      requireInt(doc, key, path);
    }
    for (const key of ["shortcut", "inner0", "inner1"]) {
      if (!(key in doc)) throw new SchemaError(`${path}.${key}`, "missing child");
      checkNode(doc[key], `${path}.${key}`);
    }
    const shortcut = doc.shortcut as Record<string, unknown>;
    if (shortcut.kind !== "linear") {
      throw new SchemaError(`${path}.shortcut`, "shortcut must be linear");
    }
    const inner0 = doc.inner0 as Record<string, unknown>;
    const inner1 = doc.inner1 as Record<string, unknown>;
    if (inner0.fan_out !== doc.hidden) {
      throw new SchemaError(`${path}.inner0`, "fan_out must equal hidden");
    }
    if (inner1.fan_in !== doc.hidden) {
      throw new SchemaError(`${path}.inner1`, "fan_in must equal hidden");
    }
    return;
  }
  throw new SchemaError(`${path}.kind`, `unknown kind ${JSON.stringify(doc.kind)}`);
}

/** Throws SchemaError (with a JSON path) on the first violation. */
export function validateArchitecture(doc: unknown): asserts doc is ArchitectureDoc {
  if (typeof doc !== "object" || doc === null) {
    throw new SchemaError("$", "expected an object");
  }
  const root = doc as Record<string, unknown>;
  if (root.loss !== "softmax_ce" && root.loss !== "mse") {
    throw new SchemaError("$.loss", "expected softmax_ce or mse");
  }
  if (!Array.isArray(root.blocks) || root.blocks.length === 0) {
    throw new SchemaError("$.blocks", "expected a non-empty list");
  }
  root.blocks.forEach((block, i) => checkNode(block, `$.blocks[${i}]`));
}

/** Count every node in the document (used against a rendering oracle). */
export function countNodes(node: ArchNodeDoc): number {
  if (node.kind === "linear") return 1;
  return 1 + countNodes(node.shortcut) + countNodes(node.inner0) + countNodes(node.inner1);
}
