/**
 * Pure geometry for drawing layouts client-side.
 *
 * The palette matches the server renderer so the constraint preview and the
 * service-rendered candidate SVGs use the same color per category index.
 */

import type { WireLayout, WireObject } from "./api.js";

export const PALETTE = [
  "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f",
  "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac",
] as const;

export function categoryColor(index: number): string {
  if (!Number.isInteger(index) || index < 0) {
    throw new RangeError(`category index must be a non-negative integer, got ${index}`);
  }
  return PALETTE[index % PALETTE.length]!;
}

export interface PixelRect {
  x: number;
  y: number;
  width: number;
  height: number;
  color: string;
  name: string;
}

export interface CanvasSize {
  width: number;
  height: number;
}

export function canvasSize(aspect: number, widthPx: number): CanvasSize {
  if (!(aspect > 0) || !(widthPx > 0)) {
    throw new RangeError(`aspect and width must be positive, got ${aspect}, ${widthPx}`);
  }
  return { width: widthPx, height: widthPx / aspect };
}

/** Clamp a box into the unit square for display; never produces negative size. */
export function clampBox(bbox: readonly [number, number, number, number]): [number, number, number, number] {
  const x = Math.min(Math.max(bbox[0], 0), 1);
  const y = Math.min(Math.max(bbox[1], 0), 1);
  const w = Math.min(Math.max(bbox[2], 0), 1 - x);
  const h = Math.min(Math.max(bbox[3], 0), 1 - y);
  return [x, y, w, h];
}

function toRect(obj: WireObject, size: CanvasSize, categories: readonly string[]): PixelRect {
  const [x, y, w, h] = clampBox(obj.bbox);
  const index = categories.indexOf(obj.category);
  return {
    x: x * size.width,
    y: y * size.height,
    width: w * size.width,
    height: h * size.height,
    color: index >= 0 ? categoryColor(index) : "#888888",
    name: obj.category,
  };
}

export function layoutRects(
  layout: WireLayout,
  widthPx: number,
  categories: readonly string[],
): PixelRect[] {
  const size = canvasSize(layout.canvas.aspect, widthPx);
  return layout.objects.map((obj) => toRect(obj, size, categories));
}

const XML_ESCAPES: Record<string, string> = {
  "&": "&amp;", "<": "&lt;", ">": "&gt;", '"': "&quot;", "'": "&apos;",
};

export function escapeXml(text: string): string {
  return text.replace(/[&<>"']/g, (ch) => XML_ESCAPES[ch]!);
}

/** Build preview SVG markup for a set of constraint boxes. */
export function constraintSvg(
  objects: readonly WireObject[],
  aspect: number,
  widthPx: number,
  categories: readonly string[],
): string {
  const size = canvasSize(aspect, widthPx);
  const parts = [
    `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${size.width} ${size.height.toFixed(2)}">`,
    `<rect x="0" y="0" width="${size.width}" height="${size.height.toFixed(2)}"` +
      ` fill="#ffffff" stroke="#2f2f2f" stroke-width="1"/>`,
  ];
  for (const obj of objects) {
    const rect = toRect(obj, size, categories);
    parts.push(
      `<rect x="${rect.x.toFixed(2)}" y="${rect.y.toFixed(2)}"` +
        ` width="${rect.width.toFixed(2)}" height="${rect.height.toFixed(2)}"` +
        ` fill="${rect.color}" fill-opacity="0.55" stroke="${rect.color}"` +
        ` data-category="${escapeXml(rect.name)}"><title>${escapeXml(rect.name)}</title></rect>`,
    );
  }
  parts.push("</svg>");
  return parts.join("");
}
