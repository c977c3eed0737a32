/** Collapsible architecture tree as an HTML string. Every residual block is
 * a <details> expandable into its shortcut and inner connections; bar widths
 * are proportional to hidden width, and layers too thin to count toward the
 * reported depth are visually de-emphasized.
 */
import {
  ArchitectureDoc,
  ArchNodeDoc,
  SchemaError,
  validateArchitecture,
} from "./types.js";

const DEPTH_FLOOR = 10;

function esc(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

function maxHidden(node: ArchNodeDoc): number {
  if (node.kind === "linear") return 0;
  return Math.max(
    node.hidden,
    maxHidden(node.inner0),
    maxHidden(node.inner1),
  );
}

function renderNode(node: ArchNodeDoc, widest: number): string {
  if (node.kind === "linear") {
    const thin = Math.min(node.fan_in, node.fan_out) < DEPTH_FLOOR;
    return (
      `<div class="node linear${thin ? " thin" : ""}" data-kind="linear">` +
      `<span class="dims">${node.fan_in} &rarr; ${node.fan_out}</span>` +
      `<span class="params">${node.params} params</span></div>`
    );
  }
  const thin = node.hidden < DEPTH_FLOOR;
  const barPct = widest > 0 ? Math.max((node.hidden / widest) * 100, 1) : 1;
  const decaying = node.decaying
    ? `<span class="decaying">${node.decaying} decaying</span>`
    : "";
  return (
    `<details class="node residual${thin ? " thin" : ""}" data-kind="residual" ` +
    `data-layer-id="${node.layer_id}" open>` +
    `<summary><span class="dims">${node.fan_in} &rarr; ${node.fan_out}</span>` +
    `<span class="hidden">hidden ${node.hidden}</span>` +
    `<span class="bar" style="width:${barPct.toFixed(1)}%"></span>${decaying}` +
    `</summary>` +
    `<div class="child"><span class="role">shortcut</span>${renderNode(node.shortcut, widest)}</div>` +
    `<div class="child"><span class="role">inner0</span>${renderNode(node.inner0, widest)}</div>` +
    `<div class="child"><span class="role">inner1</span>${renderNode(node.inner1, widest)}</div>` +
    `</details>`
  );
}

export function renderArchitecture(doc: unknown): string {
  try {
    validateArchitecture(doc);
  } catch (err) {
    if (err instanceof SchemaError) {
      return `<div class="error-panel">${esc(err.message)}</div>`;
    }
    throw err;
  }
  const arch = doc as ArchitectureDoc;
  const widest = Math.max(...arch.blocks.map(maxHidden), 1);
  const blocks = arch.blocks
    .map((b, i) => `<div class="block" data-block="${i}">${renderNode(b, widest)}</div>`)
    .join("\n");
  return (
    `<div class="architecture" data-depth="${arch.depth}">` +
    `<div class="arch-summary">${arch.input_dim} &rarr; ${arch.output_dim}, ` +
    `${arch.param_count} params, depth ${arch.depth} (layers &lt; ${DEPTH_FLOOR} wide dimmed)</div>` +
    `${blocks}</div>`
  );
}
