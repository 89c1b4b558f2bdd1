/**
 * Wire types and HTTP client for the layout generation service.
 *
 * The layout document format is shared with the Python side: bboxes are
 * [x, y, w, h] normalized to [0, 1], object order is generation order, and
 * numbers survive JSON round-trips bit-exactly, which is what makes
 * promoted candidates valid hard constraints.
 */

export interface WireObject {
  category: string;
  bbox: [number, number, number, number];
}

export interface WireCanvas {
  aspect: number;
}

export interface WireLayout {
  canvas: WireCanvas;
  objects: WireObject[];
}

export interface SoftChip {
  category: string;
  size?: [number, number];
}

export type OutputFormat = "json" | "svg";

export interface GenerateBody {
  hard?: WireObject[];
  soft?: SoftChip[];
  count: number;
  seed: number;
  format: OutputFormat;
  max_objects?: number;
  temperature?: number;
}

export interface Candidate {
  layout: WireLayout;
  svg?: string;
}

export interface GenerateResponse {
  candidates: Candidate[];
}

export class WireFormatError extends Error {
  constructor(path: string, message: string) {
    super(`${path}: ${message}`);
    this.name = "WireFormatError";
  }
}

function isRecord(value: unknown): value is Record<string, unknown> {
  return typeof value === "object" && value !== null && !Array.isArray(value);
}

function checkFinite(value: unknown, path: string): number {
  if (typeof value !== "number" || !Number.isFinite(value)) {
    throw new WireFormatError(path, "expected a finite number");
  }
  return value;
}

function checkBbox(value: unknown, path: string): [number, number, number, number] {
  if (!Array.isArray(value) || value.length !== 4) {
    throw new WireFormatError(path, "expected [x, y, w, h]");
  }
  const [x, y, w, h] = value.map((v, i) => checkFinite(v, `${path}[${i}]`));
  return [x!, y!, w!, h!];
}

function checkObject(value: unknown, path: string): WireObject {
  if (!isRecord(value)) {
    throw new WireFormatError(path, "expected an object entry");
  }
  if (typeof value.category !== "string" || value.category.length === 0) {
    throw new WireFormatError(`${path}.category`, "expected a non-empty string");
  }
  return { category: value.category, bbox: checkBbox(value.bbox, `${path}.bbox`) };
}

/** Parse and validate a layout document; throws WireFormatError with the offending path. */
export function parseLayout(text: string): WireLayout {
  let raw: unknown;
  try {
    raw = JSON.parse(text);
  } catch (err) {
    throw new WireFormatError("$", `not valid JSON (${(err as Error).message})`);
  }
  return layoutFromValue(raw);
}

/** Validate an already-parsed JSON value as a layout document. */
export function layoutFromValue(raw: unknown): WireLayout {
  if (!isRecord(raw)) {
    throw new WireFormatError("$", "expected a layout document");
  }
  if (!isRecord(raw.canvas)) {
    throw new WireFormatError("$.canvas", "expected {aspect}");
  }
  const aspect = checkFinite(raw.canvas.aspect, "$.canvas.aspect");
  if (aspect <= 0) {
    throw new WireFormatError("$.canvas.aspect", "aspect must be positive");
  }
  if (!Array.isArray(raw.objects) || raw.objects.length === 0) {
    throw new WireFormatError("$.objects", "expected a non-empty array");
  }
  const objects = raw.objects.map((o, i) => checkObject(o, `$.objects[${i}]`));
  return { canvas: { aspect }, objects };
}

/** Canonical JSON text for a layout document; parseLayout inverts it exactly. */
export function serializeLayout(layout: WireLayout): string {
  return JSON.stringify({
    canvas: { aspect: layout.canvas.aspect },
    objects: layout.objects.map((o) => ({ category: o.category, bbox: o.bbox })),
  });
}

export class ApiError extends Error {
  readonly status: number;
  readonly detail: unknown;

  constructor(status: number, detail: unknown) {
    super(`service returned ${status}: ${JSON.stringify(detail)}`);
    this.name = "ApiError";
    this.status = status;
    this.detail = detail;
  }
}

async function errorDetail(response: Response): Promise<unknown> {
  try {
    const body: unknown = await response.json();
    return isRecord(body) && "detail" in body ? body.detail : body;
  } catch {
    return response.statusText;
  }
}

export class ApiClient {
  readonly baseUrl: string;

  constructor(baseUrl: string) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  private async get<T>(path: string): Promise<T> {
    const response = await fetch(`${this.baseUrl}${path}`);
    if (!response.ok) {
      throw new ApiError(response.status, await errorDetail(response));
    }
    return (await response.json()) as T;
  }

  async health(): Promise<{ status: string; checkpoint: string }> {
    return this.get("/api/health");
  }

  async categories(): Promise<string[]> {
    const body = await this.get<{ categories: string[] }>("/api/categories");
    return body.categories;
  }

  async generate(body: GenerateBody): Promise<GenerateResponse> {
    const response = await fetch(`${this.baseUrl}/api/generate`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!response.ok) {
      throw new ApiError(response.status, await errorDetail(response));
    }
    const parsed = (await response.json()) as GenerateResponse;
    if (!Array.isArray(parsed.candidates)) {
      throw new WireFormatError("$.candidates", "expected an array of candidates");
    }
    for (const candidate of parsed.candidates) {
      layoutFromValue(candidate.layout as unknown);
    }
    return parsed;
  }
}
