import { describe, expect, it } from "vitest";

import type { WireLayout } from "../src/api.js";
import {
  canvasSize,
  categoryColor,
  clampBox,
  constraintSvg,
  escapeXml,
  layoutRects,
  PALETTE,
} from "../src/canvas.js";

const CATEGORIES = ["title", "text", "figure"] as const;

describe("geometry", () => {
  it("derives pixel height from the aspect ratio", () => {
    expect(canvasSize(0.75, 300)).toEqual({ width: 300, height: 400 });
    expect(() => canvasSize(0, 300)).toThrowError(RangeError);
    expect(() => canvasSize(0.75, 0)).toThrowError(RangeError);
  });

  it("scales normalized boxes into pixels", () => {
    const layout: WireLayout = {
      canvas: { aspect: 0.75 },
      objects: [{ category: "text", bbox: [0.25, 0.5, 0.5, 0.25] }],
    };
    const [rect] = layoutRects(layout, 300, CATEGORIES);
    expect(rect!.x).toBeCloseTo(75, 6);
    expect(rect!.y).toBeCloseTo(200, 6);
    expect(rect!.width).toBeCloseTo(150, 6);
    expect(rect!.height).toBeCloseTo(100, 6);
  });

  it("clamps out-of-range boxes into the unit square", () => {
    expect(clampBox([-0.1, 0.5, 0.8, 0.9])).toEqual([0, 0.5, 0.8, 0.5]);
    expect(clampBox([0.9, 0.9, 0.5, 0.5])).toEqual([0.9, 0.9, 0.09999999999999998, 0.09999999999999998]);
    expect(clampBox([0.2, 0.2, -1, 0.1])).toEqual([0.2, 0.2, 0, 0.1]);
  });
});

describe("colors", () => {
  it("keys fill color by category index and wraps around the palette", () => {
    expect(categoryColor(0)).toBe(PALETTE[0]);
    expect(categoryColor(10)).toBe(PALETTE[0]);
    expect(categoryColor(13)).toBe(PALETTE[3]);
  });

  it("rejects negative and fractional indices", () => {
    expect(() => categoryColor(-1)).toThrowError(RangeError);
    expect(() => categoryColor(0.5)).toThrowError(RangeError);
  });

  it("falls back to gray for categories missing from the vocabulary", () => {
    const layout: WireLayout = {
      canvas: { aspect: 1 },
      objects: [{ category: "mystery", bbox: [0, 0, 1, 1] }],
    };
    expect(layoutRects(layout, 100, CATEGORIES)[0]!.color).toBe("#888888");
  });

  it("matches the vocabulary order", () => {
    const layout: WireLayout = {
      canvas: { aspect: 1 },
      objects: [
        { category: "figure", bbox: [0, 0, 0.5, 0.5] },
        { category: "title", bbox: [0.5, 0.5, 0.5, 0.5] },
      ],
    };
    const rects = layoutRects(layout, 100, CATEGORIES);
    expect(rects[0]!.color).toBe(PALETTE[2]);
    expect(rects[1]!.color).toBe(PALETTE[0]);
  });
});

describe("constraint preview svg", () => {
  it("draws one rect per object plus the canvas background", () => {
    const svg = constraintSvg(
      [
        { category: "title", bbox: [0.06, 0.03, 0.88, 0.07] },
        { category: "text", bbox: [0.06, 0.16, 0.42, 0.22] },
      ],
      0.773,
      200,
      CATEGORIES,
    );
    expect(svg.match(/<rect /g)).toHaveLength(3);
    expect(svg.startsWith("<svg ")).toBe(true);
    expect(svg.endsWith("</svg>")).toBe(true);
  });

  it("escapes category names in markup", () => {
    const name = 'fig "quoted" <tag> & more';
    const svg = constraintSvg([{ category: name, bbox: [0, 0, 1, 1] }], 1, 100, [name]);
    expect(svg).toContain("fig &quot;quoted&quot; &lt;tag&gt; &amp; more");
    expect(svg).not.toContain("<tag>");
  });

  it("escapeXml covers every special character", () => {
    expect(escapeXml(`a&b<c>d"e'f`)).toBe("a&amp;b&lt;c&gt;d&quot;e&apos;f");
  });
});
