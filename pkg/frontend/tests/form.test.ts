import { describe, expect, it } from "vitest";
import {
  appliedAtIteration,
  parseMetaInputs,
  renderMetaForm,
  staleFields,
  validateMeta,
} from "../src/form.js";
import { MetaParams } from "../src/types.js";
import { fixtureStatus } from "./fixtures.js";

const meta: MetaParams = {
  neurons_to_add: 16, prune_count: 6, prune_ratio: null,
  learning_rate: 0.01, max_train_epochs: 20, decay_epochs: 1,
};

describe("validateMeta", () => {
  it("blocks a zero learning rate client-side", () => {
    expect(validateMeta({ learning_rate: 0 })).toHaveProperty("learning_rate");
  });

  it("mirrors the server's ranges", () => {
    expect(validateMeta({ prune_ratio: 1.5 })).toHaveProperty("prune_ratio");
    expect(validateMeta({ prune_ratio: 1.0 })).toEqual({});
    expect(validateMeta({ neurons_to_add: -1 })).toHaveProperty("neurons_to_add");
    expect(validateMeta({ neurons_to_add: 2.5 })).toHaveProperty("neurons_to_add");
    expect(validateMeta({ max_train_epochs: 0 })).toHaveProperty("max_train_epochs");
    expect(validateMeta({ decay_epochs: 0 })).toEqual({});
  });

  it("accepts a full valid update", () => {
    expect(validateMeta(meta)).toEqual({});
  });
});

describe("parseMetaInputs", () => {
  it("converts text fields to numbers and empty ratio to null", () => {
    const update = parseMetaInputs({
      neurons_to_add: "32", prune_count: "8", prune_ratio: "",
      learning_rate: "1e-4", max_train_epochs: "20", decay_epochs: "1",
    });
    expect(update).toEqual({
      neurons_to_add: 32, prune_count: 8, prune_ratio: null,
      learning_rate: 1e-4, max_train_epochs: 20, decay_epochs: 1,
    });
  });

  it("omits untouched empty fields", () => {
    expect(parseMetaInputs({ learning_rate: "0.001" }))
      .toEqual({ learning_rate: 0.001 });
  });
});

describe("renderMetaForm", () => {
  it("prefills current values and has a slot per field error", () => {
    const html = renderMetaForm(meta);
    expect(html).toContain('name="learning_rate"');
    expect(html).toContain('value="0.01"');
    expect(html).toContain('data-error-for="prune_ratio"');
    expect(html).toContain("apply at next iteration");
  });
});

describe("staleFields", () => {
  it("flags fields the server changed while editing", () => {
    const server = { ...meta, learning_rate: 0.005 };
    expect(staleFields({ neurons_to_add: 20 }, meta, server))
      .toEqual(["learning_rate"]);
  });

  it("does not flag fields the user is changing to the server value", () => {
    const server = { ...meta, learning_rate: 0.005 };
    expect(staleFields({ learning_rate: 0.005 }, meta, server)).toEqual([]);
  });
});

describe("appliedAtIteration", () => {
  it("reports the iteration once status reflects the update", () => {
    const status = fixtureStatus();
    status.meta = { ...meta, learning_rate: 1e-4 };
    expect(appliedAtIteration({ learning_rate: 1e-4 }, status))
      .toBe(status.iteration);
    expect(appliedAtIteration({ learning_rate: 2e-4 }, status)).toBeNull();
  });
});
