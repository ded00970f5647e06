// Trajectory heatmap: rows are diagnoses, columns are consultation steps.
// buildGrid is a pure transform of the server trajectory payload; the UI
// never computes probabilities itself.

import { probabilityColor, textColorFor } from "./color.js";
import type { TrajectoryPayload } from "./types.js";

export interface HeatmapCell {
  probability: number;
  color: string;
  textColor: string;
}

export interface HeatmapRow {
  target: string;
  marked: boolean; // known true diagnosis in demo data, rendered bold + starred
  cells: HeatmapCell[];
}

export interface HeatmapGrid {
  columnLabels: string[];
  rows: HeatmapRow[];
  threshold: number;
}

export function columnLabel(step: TrajectoryPayload["steps"][number]): string {
  if (step.feature_id === null) {
    return "initial";
  }
  const q = step.question ?? step.feature_id;
  return `${q}: ${String(step.value)}`;
}

export type GridResult = { ok: true; grid: HeatmapGrid } | { ok: false; error: string };

// Never throws: malformed payloads yield an error state the app can render.
export function safeGrid(trajectory: TrajectoryPayload, markedTargets: string[] = []): GridResult {
  try {
    return { ok: true, grid: buildGrid(trajectory, markedTargets) };
  } catch (err) {
    return { ok: false, error: err instanceof Error ? err.message : String(err) };
  }
}

export function buildGrid(trajectory: TrajectoryPayload, markedTargets: string[] = []): HeatmapGrid {
  const marked = new Set(markedTargets);
  const columnLabels = trajectory.steps.map(columnLabel);
  const rows = trajectory.targets.map((target) => ({
    target,
    marked: marked.has(target),
    cells: trajectory.steps.map((step) => {
      const p = step.probabilities[target];
      if (p === undefined) {
        throw new Error(`trajectory step ${step.index} is missing target ${target}`);
      }
      return { probability: p, color: probabilityColor(p), textColor: textColorFor(p) };
    }),
  }));
  return { columnLabels, rows, threshold: trajectory.threshold };
}

export function renderHeatmap(container: HTMLElement, grid: HeatmapGrid): void {
  const table = document.createElement("table");
  table.className = "heatmap";

  const head = table.createTHead().insertRow();
  head.appendChild(document.createElement("th"));
  for (const label of grid.columnLabels) {
    const th = document.createElement("th");
    th.textContent = label;
    head.appendChild(th);
  }

  const body = table.createTBody();
  for (const row of grid.rows) {
    const tr = body.insertRow();
    const name = document.createElement("th");
    name.textContent = row.marked ? `${row.target} *` : row.target;
    if (row.marked) {
      name.classList.add("true-diagnosis");
    }
    tr.appendChild(name);
    for (const cell of row.cells) {
      const td = tr.insertCell();
      td.style.backgroundColor = cell.color;
      td.style.color = cell.textColor;
      td.title = cell.probability.toFixed(4);
      td.textContent = cell.probability.toFixed(2);
    }
  }

  container.replaceChildren(table);
}
