// Thin typed client over the consultation service HTTP API.  The fetch
// implementation is injectable for tests.

import type {
  AnswerAccepted,
  ApiError,
  ModelListEntry,
  PredictionsPayload,
  SchemaPayload,
  SessionCreated,
  TrajectoryPayload,
} from "./types.js";

export class ServiceRequestError extends Error {
  constructor(
    public readonly status: number,
    public readonly payload: ApiError,
  ) {
    super(`${payload.code}: ${payload.message}`);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      headers: { "Content-Type": "application/json" },
      ...init,
    });
    const body = await response.json();
    if (!response.ok) {
      throw new ServiceRequestError(response.status, body as ApiError);
    }
    return body as T;
  }

  listModels(): Promise<{ models: ModelListEntry[] }> {
    return this.request("/models");
  }

  getSchema(modelId: string): Promise<SchemaPayload> {
    return this.request(`/models/${modelId}/schema`);
  }

  createSession(modelId: string): Promise<SessionCreated> {
    return this.request("/sessions", {
      method: "POST",
      body: JSON.stringify({ model_id: modelId }),
    });
  }

  submitAnswer(sessionId: string, featureId: string, value: unknown): Promise<AnswerAccepted> {
    return this.request(`/sessions/${sessionId}/answers`, {
      method: "POST",
      body: JSON.stringify({ feature_id: featureId, value }),
    });
  }

  retractAnswer(sessionId: string, featureId: string): Promise<{ predictions: Record<string, number> }> {
    return this.request(`/sessions/${sessionId}/answers/${featureId}`, { method: "DELETE" });
  }

  getPredictions(sessionId: string): Promise<PredictionsPayload> {
    return this.request(`/sessions/${sessionId}/predictions`);
  }

  getTrajectory(sessionId: string): Promise<TrajectoryPayload> {
    return this.request(`/sessions/${sessionId}/trajectory`);
  }
}
