import { describe, expect, it } from "vitest";

import {
  layoutFromValue,
  parseLayout,
  serializeLayout,
  WireFormatError,
  type WireLayout,
} from "../src/api.js";

// deterministic 32-bit generator so failures reproduce
function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

const NAMES = ["title", "text", "figure", 'fig "quoted"', "näme <tag> & more"];

function randomDoc(rng: () => number): WireLayout {
  const objects = [];
  const count = 1 + Math.floor(rng() * 7);
  for (let i = 0; i < count; i++) {
    objects.push({
      category: NAMES[Math.floor(rng() * NAMES.length)]!,
      bbox: [rng(), rng(), rng() * 0.9 + 1e-4, rng() * 0.9 + 1e-4] as [number, number, number, number],
    });
  }
  return { canvas: { aspect: 0.25 + rng() * 2 }, objects };
}

describe("layout wire format", () => {
  it("round-trips random documents exactly", () => {
    const rng = mulberry32(7);
    for (let i = 0; i < 200; i++) {
      const doc = randomDoc(rng);
      expect(parseLayout(serializeLayout(doc))).toEqual(doc);
    }
  });

  it("preserves awkward float values bit-exactly", () => {
    const doc: WireLayout = {
      canvas: { aspect: 0.773 },
      objects: [
        { category: "text", bbox: [0.1 + 0.2, 1 / 3, 1e-7, 0.9999999999999999] },
      ],
    };
    const back = parseLayout(serializeLayout(doc));
    expect(back.objects[0]!.bbox[0]).toBe(0.1 + 0.2);
    expect(back.objects[0]!.bbox[1]).toBe(1 / 3);
    expect(back).toEqual(doc);
  });

  it("serialization matches the plain JSON form", () => {
    const doc = randomDoc(mulberry32(11));
    expect(JSON.parse(serializeLayout(doc))).toEqual(doc);
  });

  it.each([
    ["not json at all", "$"],
    ['{"objects": []}', "$.canvas"],
    ['{"canvas": {"aspect": 0}, "objects": [{"category": "a", "bbox": [0,0,1,1]}]}', "$.canvas.aspect"],
    ['{"canvas": {"aspect": 1}, "objects": []}', "$.objects"],
    ['{"canvas": {"aspect": 1}, "objects": [{"category": "a", "bbox": [0,0,1]}]}', "$.objects[0].bbox"],
    ['{"canvas": {"aspect": 1}, "objects": [{"category": "", "bbox": [0,0,1,1]}]}', "$.objects[0].category"],
    ['{"canvas": {"aspect": 1}, "objects": [{"category": "a", "bbox": [0,null,1,1]}]}', "$.objects[0].bbox[1]"],
  ])("rejects malformed input %#, blaming %s", (text, path) => {
    expect(() => parseLayout(text)).toThrowError(WireFormatError);
    expect(() => parseLayout(text)).toThrowError(new RegExp(path.replace(/[$.[\]]/g, "\\$&")));
  });

  it("rejects non-object candidates from a value", () => {
    expect(() => layoutFromValue(null)).toThrowError(WireFormatError);
    expect(() => layoutFromValue([1, 2])).toThrowError(WireFormatError);
  });
});
