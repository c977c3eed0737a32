import { readFileSync } from "node:fs";
import { ArchitectureDoc, HistoryEvent, StatusSnapshot } from "../src/types.js";

function load<T>(name: string): T {
  const url = new URL(`../fixtures/${name}`, import.meta.url);
  return JSON.parse(readFileSync(url, "utf-8")) as T;
}

export const fixtureEvents = (): HistoryEvent[] => load("events.json");
export const fixtureArchitecture = (): ArchitectureDoc => load("architecture.json");
export const fixtureStatus = (): StatusSnapshot => load("status.json");
