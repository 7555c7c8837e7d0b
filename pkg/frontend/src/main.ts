/** DOM wiring: renders ScreeningController state into the static page. */

import {
  DISCLAIMER,
  ScreeningController,
  UiState,
  confidenceFor,
  formatResult,
} from "./logic.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

function render(state: UiState): void {
  const preview = el<HTMLImageElement>("preview");
  const submit = el<HTMLButtonElement>("submit");
  const retry = el<HTMLButtonElement>("retry");
  const resultBox = el<HTMLDivElement>("result");
  const errorBox = el<HTMLDivElement>("error");
  const pickError = el<HTMLDivElement>("pick-error");
  const status = el<HTMLDivElement>("status");

  pickError.textContent = state.selectionError ?? "";
  pickError.hidden = state.selectionError === null;

  preview.hidden = state.file === null;
  submit.disabled = !(state.phase === "preview" || state.phase === "result");
  status.textContent = state.phase === "submitting" ? "Analyzing image..." : "";

  resultBox.hidden = state.phase !== "result";
  if (state.phase === "result" && state.result !== null) {
    el<HTMLSpanElement>("verdict").textContent = formatResult(state.result);
    el<HTMLSpanElement>("verdict").className =
      state.result.label === "Diseased" ? "verdict diseased" : "verdict healthy";
    el<HTMLSpanElement>("score-detail").textContent =
      `score ${state.result.score.toFixed(4)}, ` +
      `confidence ${(confidenceFor(state.result) * 100).toFixed(1)}%, ` +
      `threshold ${state.result.threshold}, model ${state.result.model_version}`;
  }

  errorBox.hidden = state.phase !== "error";
  retry.hidden = state.phase !== "error";
  if (state.phase === "error") {
    el<HTMLSpanElement>("error-text").textContent =
      `${state.errorCode ?? "error"}: ${state.errorDetail ?? "request failed"}`;
  }

  el<HTMLSpanElement>("model-version").textContent = state.modelVersion;
}

function main(): void {
  el<HTMLParagraphElement>("disclaimer").textContent = DISCLAIMER;

  const controller = new ScreeningController(
    "",
    (input, init) => fetch(input, init),
    render,
  );

  const picker = el<HTMLInputElement>("picker");
  picker.addEventListener("change", () => {
    const file = picker.files?.[0];
    if (file === undefined) {
      return;
    }
    controller.selectImage(file);
    if (controller.state.file !== null) {
      const preview = el<HTMLImageElement>("preview");
      preview.src = URL.createObjectURL(file);
    }
  });

  el<HTMLButtonElement>("submit").addEventListener("click", () => {
    void controller.submit();
  });
  el<HTMLButtonElement>("retry").addEventListener("click", () => {
    void controller.retry();
  });

  void controller.loadMetadata();
  render(controller.state);
}

main();
