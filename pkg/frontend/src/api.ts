// Typed client for the scenario service. All simulation numbers come from
// the service; the UI never computes epidemiology on its own.

export interface ScenarioInfo {
  name: string;
  description: string;
  population: number;
  horizon_days: number;
  coverage: number;
  action_mask: { closure: boolean; vaccination: boolean; quarantine: boolean };
  initial: Record<string, unknown>;
}

export interface Action {
  closure: number;
  vaccination: number;
  quarantine: number;
}

export interface Compartments {
  s: number;
  h: number;
  i: number;
  q: number;
  d: number;
}

export interface StepRecord {
  day: number;
  action: Action;
  reward: [number, number, number];
  new_infections: number;
  new_deaths: number;
  economic_cost: number;
  compartments: Compartments;
  done: boolean;
}

export interface SessionView {
  id: string;
  scenario: string;
  seed: number;
  deterministic: boolean;
  mode: string;
  created_at: string;
  horizon_days: number;
  population: number;
  state: { day: number; done: boolean; compartments: Compartments };
  history: StepRecord[];
  pending_suggestion: Suggestion | null;
}

export interface Suggestion {
  day: number;
  command: { targets: number[]; horizon: number; priority: string };
  action: Action;
}

export interface FrontPoint {
  return: [number, number, number];
  policy?: { c: number; v: number; q: number };
  command?: { return: number[]; horizon: number };
  priority?: string;
}

export class ServiceError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class ApiClient {
  constructor(private baseUrl: string = "") {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await fetch(this.baseUrl + path, init);
    } catch (err) {
      throw new ServiceError(0, `service unreachable: ${err}`);
    }
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const body = await response.json();
        if (body && body.detail) detail = String(body.detail);
      } catch {
        // keep statusText
      }
      throw new ServiceError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  scenarios(): Promise<ScenarioInfo[]> {
    return this.request<ScenarioInfo[]>("/scenarios");
  }

  createSession(scenario: string, options: { seed?: number; deterministic?: boolean } = {}): Promise<SessionView> {
    return this.request<SessionView>("/sessions", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ scenario, ...options }),
    });
  }

  session(id: string): Promise<SessionView> {
    return this.request<SessionView>(`/sessions/${id}`);
  }

  step(id: string, action: Action): Promise<StepRecord> {
    return this.request<StepRecord>(`/sessions/${id}/step`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(action),
    });
  }

  suggest(id: string, priority: string): Promise<Suggestion> {
    return this.request<Suggestion>(
      `/sessions/${id}/suggest?c=${encodeURIComponent(priority)}`,
    );
  }

  front(scenario: string, source: "reference" | "agent" = "reference"): Promise<FrontPoint[]> {
    return this.request<FrontPoint[]>(`/fronts/${scenario}?source=${source}`);
  }
}
