// Session view model: a faithful mirror of GET /sessions/{id}. Reloading
// the page and refetching reproduces the identical view; the only
// arithmetic here is summing service-reported per-day numbers for display.

import type { FrontPoint, SessionView, StepRecord } from "./api.js";

export interface DaySeries {
  days: number[];
  newInfections: number[];
  newDeaths: number[];
  quarantined: number[];
  dead: number[];
  economicCost: number[];
}

export function daySeries(view: SessionView): DaySeries {
  const history = view.history;
  return {
    days: history.map((r) => r.day),
    newInfections: history.map((r) => r.new_infections),
    newDeaths: history.map((r) => r.new_deaths),
    quarantined: history.map((r) => r.compartments.q),
    dead: history.map((r) => r.compartments.d),
    economicCost: history.map((r) => r.economic_cost),
  };
}

export function cumulativeEconomicCost(history: StepRecord[]): number {
  let total = 0;
  for (const record of history) total += record.economic_cost;
  return total;
}

export function episodeReturn(history: StepRecord[]): [number, number, number] {
  const total: [number, number, number] = [0, 0, 0];
  for (const record of history) {
    total[0] += record.reward[0];
    total[1] += record.reward[1];
    total[2] += record.reward[2];
  }
  return total;
}

export function lastReward(view: SessionView): [number, number, number] | null {
  const last = view.history[view.history.length - 1];
  return last ? last.reward : null;
}

// Coverage slider positions for the under-vaccinated community presets.
export const COVERAGE_STOPS = [0.8, 0.85, 0.9, 0.95] as const;

export function snapCoverage(value: number): number {
  let best: number = COVERAGE_STOPS[0];
  for (const stop of COVERAGE_STOPS) {
    if (Math.abs(stop - value) < Math.abs(best - value)) best = stop;
  }
  return best;
}

export function coverageScenario(coverage: number): string {
  return `measles_cov${Math.round(snapCoverage(coverage) * 100)}`;
}

// Chart data model for the front-compare view; round-trips front JSON
// losslessly (the return triples are carried through unchanged).
export interface FrontChartData {
  label: string;
  points: [number, number, number][];
}

export function frontChartData(label: string, front: FrontPoint[]): FrontChartData {
  return { label, points: front.map((p) => [p.return[0], p.return[1], p.return[2]]) };
}
