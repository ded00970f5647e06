// Single-page consultation app: pick a model, answer questions one at a
// time, watch the probability panel and the trajectory heatmap update live.

import { ApiClient, ServiceRequestError } from "./api.js";
import { probabilityColor } from "./color.js";
import { groupFeatures, inputKindFor, validateValue } from "./forms.js";
import { renderHeatmap, safeGrid } from "./heatmap.js";
import {
  SessionViewModel,
  applyAnswer,
  applyRetraction,
  applyTrajectory,
  freshViewModel,
  remainingFeatures,
} from "./state.js";
import type { FeatureInfo } from "./types.js";

const api = new ApiClient("");

let vm: SessionViewModel | null = null;

function el<T extends HTMLElement>(id: string): T {
  const found = document.getElementById(id);
  if (!found) throw new Error(`missing element #${id}`);
  return found as T;
}

function showBanner(message: string, retry?: () => void): void {
  const banner = el<HTMLDivElement>("banner");
  banner.replaceChildren();
  banner.textContent = message;
  if (retry) {
    const button = document.createElement("button");
    button.textContent = "retry";
    button.addEventListener("click", retry);
    banner.appendChild(button);
  }
  banner.hidden = false;
}

function hideBanner(): void {
  el<HTMLDivElement>("banner").hidden = true;
}

async function loadModels(): Promise<void> {
  try {
    const { models } = await api.listModels();
    const select = el<HTMLSelectElement>("model-select");
    select.replaceChildren();
    for (const m of models) {
      const option = document.createElement("option");
      option.value = m.model_id;
      option.textContent = `${m.model_id} (${m.n_features} questions, ${m.targets.length} diagnoses)`;
      select.appendChild(option);
    }
    hideBanner();
    el<HTMLButtonElement>("start-button").disabled = models.length === 0;
    if (models.length === 0) {
      showBanner("no models registered; start the service with --model <file>");
    }
  } catch {
    showBanner("service unreachable", loadModels);
  }
}

async function startConsultation(): Promise<void> {
  const modelId = el<HTMLSelectElement>("model-select").value;
  try {
    const schema = await api.getSchema(modelId);
    const created = await api.createSession(modelId);
    vm = freshViewModel(created.session_id, schema, created.predictions);
    await refreshTrajectory();
  } catch {
    showBanner("could not create a session", startConsultation);
  }
}

async function refreshTrajectory(): Promise<void> {
  if (!vm) return;
  const trajectory = await api.getTrajectory(vm.sessionId);
  vm = applyTrajectory(vm, trajectory);
  render();
}

async function submit(feature: FeatureInfo, raw: string, errorEl: HTMLElement): Promise<void> {
  if (!vm || vm.busy) return;
  const validated = validateValue(feature, raw);
  if (!validated.ok) {
    errorEl.textContent = validated.error ?? "invalid value";
    return;
  }
  errorEl.textContent = "";
  vm = { ...vm, busy: true };
  render();
  try {
    const accepted = await api.submitAnswer(vm.sessionId, feature.id, validated.value);
    vm = applyAnswer({ ...vm, busy: false }, feature.id, validated.value, accepted.predictions);
    await refreshTrajectory();
  } catch (err) {
    vm = { ...vm, busy: false };
    render();
    if (err instanceof ServiceRequestError) {
      errorEl.textContent = err.payload.message;
    } else {
      showBanner("request failed", () => void 0);
    }
  }
}

async function retract(featureId: string): Promise<void> {
  if (!vm || vm.busy) return;
  vm = { ...vm, busy: true };
  render();
  const result = await api.retractAnswer(vm.sessionId, featureId);
  vm = applyRetraction({ ...vm, busy: false }, featureId, result.predictions);
  await refreshTrajectory();
}

function renderProbabilities(): void {
  if (!vm) return;
  const panel = el<HTMLDivElement>("probability-panel");
  panel.replaceChildren();
  for (const target of vm.schema.targets) {
    const p = vm.probabilities[target];
    const row = document.createElement("div");
    row.className = "prob-row";
    const name = document.createElement("span");
    name.textContent = target;
    const bar = document.createElement("span");
    bar.className = "prob-chip";
    bar.style.backgroundColor = probabilityColor(p);
    bar.textContent = p.toFixed(3) + (p >= vm.threshold ? " ≥ 0.5" : "");
    row.append(name, bar);
    panel.appendChild(row);
  }
}

function renderQuestions(): void {
  if (!vm) return;
  const form = el<HTMLDivElement>("question-form");
  form.replaceChildren();
  for (const group of groupFeatures(remainingFeatures(vm))) {
    const fieldset = document.createElement("fieldset");
    const legend = document.createElement("legend");
    legend.textContent = `question group ${group.group}`;
    fieldset.appendChild(legend);
    for (const feature of group.features) {
      fieldset.appendChild(questionRow(feature));
    }
    form.appendChild(fieldset);
  }
}

function questionRow(feature: FeatureInfo): HTMLElement {
  const row = document.createElement("div");
  row.className = "question";
  const label = document.createElement("label");
  label.textContent = feature.question;
  const error = document.createElement("span");
  error.className = "field-error";
  const kind = inputKindFor(feature);
  let input: HTMLInputElement | HTMLSelectElement;
  if (kind === "select") {
    input = document.createElement("select");
    for (const level of feature.levels) {
      const option = document.createElement("option");
      option.value = level;
      option.textContent = level;
      input.appendChild(option);
    }
  } else if (kind === "toggle") {
    input = document.createElement("select");
    for (const level of ["0", "1"]) {
      const option = document.createElement("option");
      option.value = level;
      option.textContent = level === "1" ? "yes" : "no";
      input.appendChild(option);
    }
  } else {
    input = document.createElement("input");
    input.type = "text";
    input.placeholder = "number";
  }
  const button = document.createElement("button");
  button.textContent = "answer";
  button.disabled = vm?.busy ?? false;
  button.addEventListener("click", () => void submit(feature, input.value, error));
  row.append(label, input, button, error);
  return row;
}

function renderAnswered(): void {
  if (!vm) return;
  const list = el<HTMLUListElement>("answered-list");
  list.replaceChildren();
  for (const a of vm.answered) {
    const item = document.createElement("li");
    item.textContent = `${a.featureId} = ${String(a.value)} `;
    const undo = document.createElement("button");
    undo.textContent = "retract";
    undo.disabled = vm.busy;
    undo.addEventListener("click", () => void retract(a.featureId));
    item.appendChild(undo);
    list.appendChild(item);
  }
}

function render(): void {
  if (!vm) return;
  el<HTMLDivElement>("session-screen").hidden = false;
  el<HTMLDivElement>("session-label").textContent =
    `session ${vm.sessionId.slice(0, 8)} | ${vm.answered.length} answered`;
  renderProbabilities();
  renderQuestions();
  renderAnswered();
  if (vm.trajectory) {
    const result = safeGrid(vm.trajectory);
    const target = el<HTMLDivElement>("heatmap");
    if (result.ok) {
      renderHeatmap(target, result.grid);
    } else {
      target.textContent = `trajectory unavailable: ${result.error}`;
    }
  }
}

export function bootstrap(): void {
  el<HTMLButtonElement>("start-button").addEventListener("click", () => void startConsultation());
  void loadModels();
}

if (typeof document !== "undefined" && document.getElementById("start-button")) {
  bootstrap();
}
