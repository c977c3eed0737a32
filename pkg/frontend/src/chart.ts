/** Twin-axis progress chart rendered as an SVG string: accuracy (or loss,
 * for regression runs) on the left axis, parameter count on the right,
 * epochs along the bottom, with a vertical marker at every iteration
 * boundary. Pure string construction so it is trivially testable and the
 * view is always a function of the event list alone.
 */
import { HistoryEvent } from "./types.js";

export interface ChartOptions {
  width?: number;
  height?: number;
}

const MARGIN = { top: 14, right: 58, bottom: 26, left: 46 };

function scale(domainLo: number, domainHi: number, rangeLo: number, rangeHi: number) {
  const span = domainHi - domainLo || 1;
  return (v: number) => rangeLo + ((v - domainLo) / span) * (rangeHi - rangeLo);
}

function polyline(points: Array<[number, number]>, cls: string): string {
  const attr = points.map(([x, y]) => `${x.toFixed(1)},${y.toFixed(1)}`).join(" ");
  return `<polyline class="${cls}" fill="none" points="${attr}" data-count="${points.length}"/>`;
}

/** Epochs at which a new iteration starts (phase boundaries for the chart). */
export function iterationBoundaries(events: HistoryEvent[]): number[] {
  const out: number[] = [];
  for (let i = 1; i < events.length; i++) {
    if (events[i].iteration !== events[i - 1].iteration) out.push(events[i].epoch);
  }
  return out;
}

export function renderHistoryChart(events: HistoryEvent[], opts: ChartOptions = {}): string {
  const width = opts.width ?? 860;
  const height = opts.height ?? 300;
  const x0 = MARGIN.left;
  const x1 = width - MARGIN.right;
  const y0 = height - MARGIN.bottom;
  const y1 = MARGIN.top;

  const parts: string[] = [];
  parts.push(
    `<svg class="history-chart${events.length ? "" : " empty"}" ` +
    `xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${width} ${height}" ` +
    `data-events="${events.length}">`,
  );
  parts.push(`<line class="axis axis-x" x1="${x0}" y1="${y0}" x2="${x1}" y2="${y0}"/>`);
  parts.push(`<line class="axis axis-left" x1="${x0}" y1="${y0}" x2="${x0}" y2="${y1}"/>`);
  parts.push(`<line class="axis axis-right" x1="${x1}" y1="${y0}" x2="${x1}" y2="${y1}"/>`);

  if (events.length > 0) {
    const classify = events.some((e) => e.test_acc !== null);
    const leftValue = (e: HistoryEvent) =>
      classify ? (e.test_acc as number) : e.test_loss;
    const leftTrain = (e: HistoryEvent) =>
      classify ? e.train_acc : e.train_loss;

    const epochs = events.map((e) => e.epoch);
    const x = scale(epochs[0], epochs[epochs.length - 1], x0, x1);
    const leftValues = events.map(leftValue);
    const leftLo = classify ? 0 : Math.min(...leftValues);
    const leftHi = classify ? 1 : Math.max(...leftValues);
    const yLeft = scale(leftLo, leftHi, y0, y1);
    const params = events.map((e) => e.param_count);
    const yRight = scale(0, Math.max(...params), y0, y1);

    for (const epoch of iterationBoundaries(events)) {
      const px = x(epoch).toFixed(1);
      parts.push(
        `<line class="iteration-marker" data-epoch="${epoch}" ` +
        `x1="${px}" y1="${y0}" x2="${px}" y2="${y1}"/>`,
      );
    }
    const train = events
      .filter((e) => leftTrain(e) !== null)
      .map((e) => [x(e.epoch), yLeft(leftTrain(e) as number)] as [number, number]);
    if (train.length) parts.push(polyline(train, "series series-train"));
    parts.push(polyline(
      events.map((e) => [x(e.epoch), yLeft(leftValue(e))]),
      `series series-${classify ? "accuracy" : "loss"}`,
    ));
    parts.push(polyline(
      events.map((e) => [x(e.epoch), yRight(e.param_count)]),
      "series series-params",
    ));

    const leftLabel = classify ? "accuracy" : "loss";
    parts.push(`<text class="label label-left" x="${x0}" y="${y1 - 3}">${leftLabel}</text>`);
    parts.push(`<text class="label label-right" x="${x1}" y="${y1 - 3}">parameters</text>`);
    parts.push(`<text class="label label-x" x="${(x0 + x1) / 2}" y="${height - 6}">epoch</text>`);
    const last = events[events.length - 1];
    parts.push(
      `<text class="label label-latest" x="${x1}" y="${y0 + 16}" text-anchor="end">` +
      `epoch ${last.epoch}, ${last.param_count} params</text>`,
    );
  }
  parts.push("</svg>");
  return parts.join("\n");
}
