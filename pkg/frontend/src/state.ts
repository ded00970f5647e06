// Session view model: a pure mirror of the last acknowledged server
// payloads.  Every probability shown comes from a server response.

import type { FeatureInfo, SchemaPayload, TrajectoryPayload } from "./types.js";

export interface SessionViewModel {
  sessionId: string;
  schema: SchemaPayload;
  answered: { featureId: string; value: unknown }[];
  probabilities: Record<string, number>;
  trajectory: TrajectoryPayload | null;
  threshold: number;
  busy: boolean; // one in-flight mutation at a time
}

export function freshViewModel(sessionId: string, schema: SchemaPayload,
                               initial: Record<string, number>): SessionViewModel {
  return {
    sessionId,
    schema,
    answered: [],
    probabilities: initial,
    trajectory: null,
    threshold: 0.5,
    busy: false,
  };
}

export function remainingFeatures(vm: SessionViewModel): FeatureInfo[] {
  const done = new Set(vm.answered.map((a) => a.featureId));
  return vm.schema.features.filter((f) => !done.has(f.id));
}

export function applyAnswer(vm: SessionViewModel, featureId: string, value: unknown,
                            predictions: Record<string, number>): SessionViewModel {
  return {
    ...vm,
    answered: [...vm.answered, { featureId, value }],
    probabilities: predictions,
  };
}

export function applyRetraction(vm: SessionViewModel, featureId: string,
                                predictions: Record<string, number>): SessionViewModel {
  return {
    ...vm,
    answered: vm.answered.filter((a) => a.featureId !== featureId),
    probabilities: predictions,
  };
}

export function applyTrajectory(vm: SessionViewModel, trajectory: TrajectoryPayload): SessionViewModel {
  return { ...vm, trajectory, threshold: trajectory.threshold };
}
