// View components. The UI is stateless with respect to simulation: every
// render works off the latest service responses, so a page reload that
// refetches the session reproduces the identical view.

import { ApiClient, ScenarioInfo, ServiceError, SessionView, Suggestion } from "./api.js";
import { frontCompareChart, lineChart, ScatterGroup } from "./charts.js";
import {
  coverageScenario,
  cumulativeEconomicCost,
  daySeries,
  episodeReturn,
  frontChartData,
  lastReward,
  snapCoverage,
} from "./model.js";

const CHANNELS = ["closure", "vaccination", "quarantine"] as const;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  if (text !== undefined) node.textContent = text;
  return node;
}

export class App {
  root: HTMLElement;
  client: ApiClient;
  view: SessionView | null = null;
  scenarios: ScenarioInfo[] = [];
  suggestion: Suggestion | null = null;

  private picker: HTMLElement;
  private steer: HTMLElement;
  private charts: HTMLElement;
  private compare: HTMLElement;
  private status: HTMLElement;

  constructor(root: HTMLElement, client: ApiClient) {
    this.root = root;
    this.client = client;
    this.status = el("div", { id: "status", class: "status" });
    this.picker = el("section", { id: "picker" });
    this.steer = el("section", { id: "steer", class: "hidden" });
    this.charts = el("section", { id: "charts" });
    this.compare = el("section", { id: "front-compare" });
    root.replaceChildren(this.status, this.picker, this.steer, this.charts, this.compare);
  }

  async start(): Promise<void> {
    try {
      this.scenarios = await this.client.scenarios();
      this.renderPicker(true);
      this.status.textContent = "";
    } catch (err) {
      this.renderPicker(false);
      this.status.textContent = `service unreachable - ${String(err)}`;
      this.status.classList.add("error");
    }
  }

  renderPicker(enabled: boolean): void {
    this.picker.replaceChildren();
    const title = el("h2", {}, "scenario");
    const select = el("select", { id: "scenario-select" });
    for (const s of this.scenarios) {
      const option = el("option", { value: s.name }, `${s.name} - ${s.description}`);
      select.appendChild(option);
    }
    if (this.scenarios.some((s) => s.name === "covid_uk")) {
      select.value = "covid_uk";
    }
    const coverageRow = el("div", { class: "coverage-row" });
    const coverageLabel = el("label", {}, "measles coverage ");
    const coverage = el("input", {
      type: "range", min: "0.80", max: "0.95", step: "0.01",
      value: "0.95", id: "coverage-slider",
    });
    const coverageValue = el("span", { id: "coverage-value" }, "95%");
    coverage.addEventListener("input", () => {
      const snapped = snapCoverage(Number(coverage.value));
      coverage.value = String(snapped);
      coverageValue.textContent = `${Math.round(snapped * 100)}%`;
      select.value = coverageScenario(snapped);
    });
    coverageLabel.appendChild(coverage);
    coverageRow.append(coverageLabel, coverageValue);

    const deterministic = el("input", { type: "checkbox", id: "deterministic" });
    const detLabel = el("label", {}, " deterministic mode ");
    detLabel.prepend(deterministic);

    const startButton = el("button", { id: "start-session" }, "start session");
    const retry = el("button", { id: "retry" }, "retry");
    retry.addEventListener("click", () => void this.start());
    if (!enabled) {
      select.setAttribute("disabled", "true");
      startButton.setAttribute("disabled", "true");
      coverage.setAttribute("disabled", "true");
    }
    startButton.addEventListener("click", () => {
      void this.createSession(select.value, deterministic.checked);
    });
    this.picker.append(title, select, coverageRow, detLabel, startButton);
    if (!enabled) this.picker.appendChild(retry);
  }

  async createSession(scenario: string, deterministic: boolean): Promise<void> {
    try {
      this.view = await this.client.createSession(scenario, { deterministic });
      this.suggestion = null;
      this.renderSteer();
      this.renderCharts();
      this.compare.replaceChildren();
      this.status.textContent = `session ${this.view.id} (${scenario})`;
      this.status.classList.remove("error");
    } catch (err) {
      this.status.textContent = String(err);
      this.status.classList.add("error");
    }
  }

  async refresh(): Promise<void> {
    if (!this.view) return;
    this.view = await this.client.session(this.view.id);
    this.renderSteer();
    this.renderCharts();
    if (this.view.state.done) await this.renderCompare();
  }

  sliderValues(): { closure: number; vaccination: number; quarantine: number } {
    const value = (channel: string) =>
      Number((this.steer.querySelector(`#slider-${channel}`) as HTMLInputElement).value);
    return {
      closure: value("closure"),
      vaccination: value("vaccination"),
      quarantine: value("quarantine"),
    };
  }

  renderSteer(): void {
    const view = this.view;
    if (!view) return;
    this.steer.classList.remove("hidden");
    this.steer.replaceChildren();
    this.steer.appendChild(el("h2", {}, `day ${view.state.day} of ${view.horizon_days}`));

    const mask = this.scenarios.find((s) => s.name === view.scenario)?.action_mask;
    for (const channel of CHANNELS) {
      const row = el("div", { class: "slider-row" });
      const slider = el("input", {
        type: "range", min: "0", max: "10", step: "1", value: "0",
        id: `slider-${channel}`,
      });
      if (view.state.done || (mask && !mask[channel])) {
        slider.setAttribute("disabled", "true");
      }
      const label = el("label", {}, `${channel} `);
      label.appendChild(slider);
      row.append(label);
      this.steer.appendChild(row);
    }

    const stepButton = el("button", { id: "step-day" }, "apply for one day");
    if (view.state.done) stepButton.setAttribute("disabled", "true");
    stepButton.addEventListener("click", () => void this.stepDay());
    const suggestButton = el("button", { id: "suggest" }, "suggest (balanced)");
    if (view.state.done) suggestButton.setAttribute("disabled", "true");
    suggestButton.addEventListener("click", () => void this.fetchSuggestion("balanced"));
    this.steer.append(stepButton, suggestButton);

    const reward = lastReward(view);
    const rewardText = reward
      ? `last day reward: [${reward.map((r) => String(r)).join(", ")}]`
      : "no days played yet";
    this.steer.appendChild(el("div", { id: "last-reward" }, rewardText));

    const total = cumulativeEconomicCost(view.history);
    const cost = el("div", { id: "cumulative-cost" });
    cost.dataset.value = String(total);
    cost.textContent = `cumulative economic cost: ${String(total)}`;
    this.steer.appendChild(cost);

    if (this.suggestion) {
      const chips = el("div", { id: "suggestion-chips" });
      chips.appendChild(el("span", { class: "chip-label" },
        `agent suggests (${this.suggestion.command.priority}):`));
      for (const channel of CHANNELS) {
        chips.appendChild(el("span", { class: "chip", id: `chip-${channel}` },
          `${channel} ${this.suggestion.action[channel]}`));
      }
      const accept = el("button", { id: "accept-suggestion" }, "accept");
      accept.addEventListener("click", () => {
        for (const channel of CHANNELS) {
          const slider = this.steer.querySelector(`#slider-${channel}`) as HTMLInputElement;
          slider.value = String(this.suggestion!.action[channel]);
        }
      });
      chips.appendChild(accept);
      this.steer.appendChild(chips);
    }
  }

  async stepDay(): Promise<void> {
    if (!this.view || this.view.state.done) return;
    const action = this.sliderValues();
    try {
      await this.client.step(this.view.id, action);
    } catch (err) {
      if (err instanceof ServiceError && err.status === 409) {
        await this.refresh();
        return;
      }
      this.status.textContent = String(err);
      this.status.classList.add("error");
      return;
    }
    this.suggestion = null;
    await this.refresh();
  }

  async fetchSuggestion(priority: string): Promise<void> {
    if (!this.view) return;
    try {
      this.suggestion = await this.client.suggest(this.view.id, priority);
      this.renderSteer();
    } catch (err) {
      this.status.textContent = String(err);
      this.status.classList.add("error");
    }
  }

  renderCharts(): void {
    const view = this.view;
    if (!view) return;
    this.charts.replaceChildren();
    const series = daySeries(view);
    const panels: [string, number[], string][] = [
      ["daily new infections", series.newInfections, "#c23b3b"],
      ["daily new deaths", series.newDeaths, "#555555"],
      ["quarantined", series.quarantined, "#c98a1f"],
      ["daily economic cost", series.economicCost, "#2c6fb3"],
    ];
    for (const [label, values, color] of panels) {
      const holder = el("div", { class: "chart-holder" });
      this.charts.appendChild(holder);
      lineChart(holder, label, [{ label, x: series.days, y: values, color }]);
    }
  }

  async renderCompare(): Promise<void> {
    const view = this.view;
    if (!view || !view.state.done) return;
    this.compare.replaceChildren(el("h2", {}, "trade-off comparison"));
    const holder = el("div", { id: "front-charts" });
    this.compare.appendChild(holder);
    const groups: ScatterGroup[] = [];
    try {
      const reference = await this.client.front(view.scenario, "reference");
      groups.push({ ...frontChartData("reference front", reference), color: "#888888" });
    } catch {
      // chart renders with whatever fronts are available
    }
    try {
      const agent = await this.client.front(view.scenario, "agent");
      groups.push({ ...frontChartData("agent front", agent), color: "#2c6fb3" });
    } catch {
      // no trained policy: reference + user point only
    }
    const user = episodeReturn(view.history);
    frontCompareChart(holder, groups, user);
  }
}

export function createApp(root: HTMLElement, client: ApiClient): App {
  return new App(root, client);
}
