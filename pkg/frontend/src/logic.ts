/**
 * UI logic for the screening upload page, kept free of DOM access so the
 * whole state machine is unit-testable: select -> preview -> submitting ->
 * result | error (with retry). The page never re-thresholds: the label
 * shown is exactly the label the service returned.
 */

export const MAX_UPLOAD_BYTES = 10 * 1024 * 1024;

export const DISCLAIMER =
  "This screening result is not a medical diagnosis. " +
  "Always consult an ophthalmologist or qualified clinician.";

export type Phase = "idle" | "preview" | "submitting" | "result" | "error";

export interface PredictionResponse {
  label: "Diseased" | "Healthy";
  score: number;
  threshold: number;
  model_version: string;
  latency_ms: number;
}

export interface ServiceMetadata {
  model_version: string;
  input_shape: number[];
  threshold: number;
  parameter_count: number;
}

export interface UiState {
  phase: Phase;
  file: File | null;
  /** Inline complaint about the picked file; shown without leaving idle. */
  selectionError: string | null;
  result: PredictionResponse | null;
  errorCode: string | null;
  errorDetail: string | null;
  modelVersion: string;
  serverThreshold: number | null;
}

export function initialState(): UiState {
  return {
    phase: "idle",
    file: null,
    selectionError: null,
    result: null,
    errorCode: null,
    errorDetail: null,
    modelVersion: "unknown",
    serverThreshold: null,
  };
}

export function validateFile(name: string, type: string, size: number): string | null {
  if (!type.startsWith("image/")) {
    return `"${name}" is not an image file.`;
  }
  if (size > MAX_UPLOAD_BYTES) {
    const mib = (size / (1024 * 1024)).toFixed(1);
    return `"${name}" is ${mib} MiB; the limit is 10 MiB.`;
  }
  return null;
}

/** Confidence in the stated label: score for Diseased, 1 - score otherwise. */
export function confidenceFor(result: Pick<PredictionResponse, "label" | "score">): number {
  return result.label === "Diseased" ? result.score : 1 - result.score;
}

export function formatResult(result: Pick<PredictionResponse, "label" | "score">): string {
  const pct = Math.round(confidenceFor(result) * 100);
  return `${result.label}, confidence ${pct}%`;
}

export class ApiError extends Error {
  constructor(public code: string, public detail: string) {
    super(`${code}: ${detail}`);
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export async function requestPrediction(
  baseUrl: string,
  file: Blob,
  fetchFn: FetchLike,
): Promise<PredictionResponse> {
  const form = new FormData();
  form.append("image", file, file instanceof File ? file.name : "upload.png");
  const resp = await fetchFn(`${baseUrl}/predict`, { method: "POST", body: form });
  if (!resp.ok) {
    let code = `http_${resp.status}`;
    let detail = resp.statusText || "request failed";
    try {
      const body = await resp.json();
      if (body && typeof body.error === "string") {
        code = body.error;
        detail = typeof body.detail === "string" ? body.detail : detail;
      }
    } catch {
      // non-JSON error body; keep the HTTP status as the code
    }
    throw new ApiError(code, detail);
  }
  return (await resp.json()) as PredictionResponse;
}

export async function requestMetadata(
  baseUrl: string,
  fetchFn: FetchLike,
): Promise<ServiceMetadata> {
  const resp = await fetchFn(`${baseUrl}/metadata`);
  if (!resp.ok) {
    throw new ApiError(`http_${resp.status}`, "metadata unavailable");
  }
  return (await resp.json()) as ServiceMetadata;
}

/**
 * Drives the page state. One in-flight request at a time: submit() while
 * submitting is a no-op. Every state change is pushed to the listener.
 */
export class ScreeningController {
  state: UiState = initialState();

  constructor(
    private baseUrl: string,
    private fetchFn: FetchLike,
    private onChange: (state: UiState) => void = () => undefined,
  ) {}

  private push(partial: Partial<UiState>): void {
    this.state = { ...this.state, ...partial };
    this.onChange(this.state);
  }

  async loadMetadata(): Promise<void> {
    try {
      const meta = await requestMetadata(this.baseUrl, this.fetchFn);
      this.push({ modelVersion: meta.model_version, serverThreshold: meta.threshold });
    } catch {
      // header stays "unknown"; uploading must keep working regardless
      this.push({ modelVersion: "unknown" });
    }
  }

  /** Client-side validation happens here; invalid picks never hit the network. */
  selectImage(file: File): void {
    const complaint = validateFile(file.name, file.type, file.size);
    if (complaint !== null) {
      this.push({ phase: "idle", file: null, selectionError: complaint, result: null });
      return;
    }
    this.push({
      phase: "preview",
      file,
      selectionError: null,
      result: null,
      errorCode: null,
      errorDetail: null,
    });
  }

  async submit(): Promise<void> {
    if (this.state.phase === "submitting" || this.state.file === null) {
      return;
    }
    this.push({ phase: "submitting", errorCode: null, errorDetail: null });
    try {
      const result = await requestPrediction(this.baseUrl, this.state.file, this.fetchFn);
      this.push({ phase: "result", result });
    } catch (err) {
      if (err instanceof ApiError) {
        this.push({ phase: "error", errorCode: err.code, errorDetail: err.detail });
      } else {
        this.push({
          phase: "error",
          errorCode: "network_error",
          errorDetail: "Could not reach the screening service.",
        });
      }
    }
  }

  /** The error phase always offers this path back. */
  async retry(): Promise<void> {
    if (this.state.phase !== "error") {
      return;
    }
    await this.submit();
  }

  reset(): void {
    const { modelVersion, serverThreshold } = this.state;
    this.state = { ...initialState(), modelVersion, serverThreshold };
    this.onChange(this.state);
  }
}
