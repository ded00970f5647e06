// Question form helpers: features grouped by their simultaneity tag, one
// input descriptor per kind, and client-side validation mirroring the
// service's value rules.

import type { FeatureInfo } from "./types.js";

export interface FeatureGroup {
  group: number;
  features: FeatureInfo[];
}

export function groupFeatures(features: FeatureInfo[]): FeatureGroup[] {
  const byGroup = new Map<number, FeatureInfo[]>();
  for (const f of features) {
    const bucket = byGroup.get(f.group);
    if (bucket) {
      bucket.push(f);
    } else {
      byGroup.set(f.group, [f]);
    }
  }
  return [...byGroup.entries()]
    .sort((a, b) => a[0] - b[0])
    .map(([group, fs]) => ({ group, features: fs }));
}

export type InputKind = "number" | "toggle" | "select";

export function inputKindFor(feature: FeatureInfo): InputKind {
  switch (feature.kind) {
    case "continuous":
      return "number";
    case "binary":
      return "toggle";
    case "categorical":
      return "select";
  }
}

export interface Validated {
  ok: boolean;
  value?: number | string;
  error?: string;
}

export function validateValue(feature: FeatureInfo, raw: string): Validated {
  const text = raw.trim();
  if (feature.kind === "continuous") {
    if (text === "" || Number.isNaN(Number(text)) || !Number.isFinite(Number(text))) {
      return { ok: false, error: `"${raw}" is not a number` };
    }
    return { ok: true, value: Number(text) };
  }
  if (feature.kind === "binary") {
    if (text === "0" || text === "1") {
      return { ok: true, value: Number(text) };
    }
    return { ok: false, error: "answer must be 0 or 1" };
  }
  if (!feature.levels.includes(text)) {
    return { ok: false, error: `expected one of: ${feature.levels.join(", ")}` };
  }
  return { ok: true, value: text };
}
