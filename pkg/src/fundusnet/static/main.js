/** DOM wiring: renders ScreeningController state into the static page. */
import { DISCLAIMER, ScreeningController, confidenceFor, formatResult, } from "./logic.js";
function el(id) {
    const node = document.getElementById(id);
    if (node === null) {
        throw new Error(`missing element #${id}`);
    }
    return node;
}
function render(state) {
    const preview = el("preview");
    const submit = el("submit");
    const retry = el("retry");
    const resultBox = el("result");
    const errorBox = el("error");
    const pickError = el("pick-error");
    const status = el("status");
    pickError.textContent = state.selectionError ?? "";
    pickError.hidden = state.selectionError === null;
    preview.hidden = state.file === null;
    submit.disabled = !(state.phase === "preview" || state.phase === "result");
    status.textContent = state.phase === "submitting" ? "Analyzing image..." : "";
    resultBox.hidden = state.phase !== "result";
    if (state.phase === "result" && state.result !== null) {
        el("verdict").textContent = formatResult(state.result);
        el("verdict").className =
            state.result.label === "Diseased" ? "verdict diseased" : "verdict healthy";
        el("score-detail").textContent =
            `score ${state.result.score.toFixed(4)}, ` +
                `confidence ${(confidenceFor(state.result) * 100).toFixed(1)}%, ` +
                `threshold ${state.result.threshold}, model ${state.result.model_version}`;
    }
    errorBox.hidden = state.phase !== "error";
    retry.hidden = state.phase !== "error";
    if (state.phase === "error") {
        el("error-text").textContent =
            `${state.errorCode ?? "error"}: ${state.errorDetail ?? "request failed"}`;
    }
    el("model-version").textContent = state.modelVersion;
}
function main() {
    el("disclaimer").textContent = DISCLAIMER;
    const controller = new ScreeningController("", (input, init) => fetch(input, init), render);
    const picker = el("picker");
    picker.addEventListener("change", () => {
        const file = picker.files?.[0];
        if (file === undefined) {
            return;
        }
        controller.selectImage(file);
        if (controller.state.file !== null) {
            const preview = el("preview");
            preview.src = URL.createObjectURL(file);
        }
    });
    el("submit").addEventListener("click", () => {
        void controller.submit();
    });
    el("retry").addEventListener("click", () => {
        void controller.retry();
    });
    void controller.loadMetadata();
    render(controller.state);
}
main();
