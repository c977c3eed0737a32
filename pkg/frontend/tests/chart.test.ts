import { describe, expect, it } from "vitest";
import { iterationBoundaries, renderHistoryChart } from "../src/chart.js";
import { HistoryEvent } from "../src/types.js";
import { fixtureEvents } from "./fixtures.js";

function attr(svg: string, selector: RegExp): string[] {
  return [...svg.matchAll(selector)].map((m) => m[1]);
}

describe("renderHistoryChart", () => {
  it("renders empty axes for an empty history", () => {
    const svg = renderHistoryChart([]);
    expect(svg).toContain('class="history-chart empty"');
    expect(svg).toContain("axis-x");
    expect(svg).toContain("axis-left");
    expect(svg).toContain("axis-right");
    expect(svg).not.toContain("series-accuracy");
    expect(svg).not.toContain("iteration-marker");
  });

  it("renders one point per event on both series (400-event fixture)", () => {
    const events = fixtureEvents();
    expect(events).toHaveLength(400);
    const svg = renderHistoryChart(events);
    const counts = attr(svg, /class="series series-(?:accuracy|params)"[^>]*data-count="(\d+)"/g);
    expect(counts).toEqual(["400", "400"]);
  });

  it("marks every iteration boundary", () => {
    const events = fixtureEvents();
    const svg = renderHistoryChart(events);
    const markers = attr(svg, /class="iteration-marker" data-epoch="(\d+)"/g).map(Number);
    const expected = iterationBoundaries(events);
    expect(markers).toEqual(expected);
    expect(markers.length).toBeGreaterThan(10); // the fixture spans many iterations
  });

  it("aligns parameter-count step changes with iteration markers", () => {
    const events = fixtureEvents();
    const markerEpochs = new Set(iterationBoundaries(events));
    // where does the parameter count move? growth happens at the first epoch
    // of an iteration, pruning within it; every growth step must sit on a marker
    for (let i = 1; i < events.length; i++) {
      const grew = events[i].param_count > events[i - 1].param_count;
      if (grew) {
        expect(markerEpochs.has(events[i].epoch)).toBe(true);
      }
    }
  });

  it("falls back to the loss series for regression histories", () => {
    const base = fixtureEvents().slice(0, 20);
    const regression: HistoryEvent[] = base.map((e) => ({
      ...e, train_acc: null, test_acc: null,
    }));
    const svg = renderHistoryChart(regression);
    expect(svg).toContain("series-loss");
    expect(svg).not.toContain("series-accuracy");
    expect(svg).toContain(">loss</text>");
  });
});
