// Wire types mirroring the consultation service JSON exactly.

export type FeatureKind = "continuous" | "binary" | "categorical";

export interface FeatureInfo {
  id: string;
  kind: FeatureKind;
  question: string;
  group: number;
  levels: string[];
}

export interface SchemaPayload {
  model_id: string;
  state_dim: number;
  fingerprint: string;
  targets: string[];
  features: FeatureInfo[];
}

export interface ModelListEntry {
  model_id: string;
  path: string;
  targets: string[];
  n_features: number;
}

export interface SessionCreated {
  session_id: string;
  model_id: string;
  step: number;
  predictions: Record<string, number>;
}

export interface AnswerAccepted {
  session_id: string;
  step: number;
  feature_id: string;
  predictions: Record<string, number>;
}

export interface PredictionsPayload {
  session_id: string;
  step: number;
  answered: string[];
  predictions: Record<string, number>;
}

export interface TrajectoryStepPayload {
  index: number;
  feature_id: string | null;
  question: string | null;
  value: unknown;
  probabilities: Record<string, number>;
}

export interface TrajectoryPayload {
  targets: string[];
  threshold: number;
  steps: TrajectoryStepPayload[];
}

export interface ApiError {
  code: string;
  message: string;
  detail: Record<string, unknown>;
}
