/**
 * Working state for the constraint workflow.
 *
 * State is immutable; every transition returns a fresh value, which keeps
 * the promote semantics easy to test: promoting a candidate copies its
 * objects verbatim into the hard constraints and clears the soft chips, so
 * the next request reproduces the promoted layout as an exact prefix.
 */

import type { GenerateBody, OutputFormat, SoftChip, WireLayout, WireObject } from "./api.js";

export interface WorkingState {
  hard: WireObject[];
  soft: SoftChip[];
  count: number;
  seed: number;
}

export function initialState(): WorkingState {
  return { hard: [], soft: [], count: 4, seed: 1 };
}

function copyObject(obj: WireObject): WireObject {
  return { category: obj.category, bbox: [...obj.bbox] };
}

function copyChip(chip: SoftChip): SoftChip {
  return chip.size === undefined
    ? { category: chip.category }
    : { category: chip.category, size: [...chip.size] };
}

/** Adopt a candidate: its objects become the hard prefix, soft chips reset. */
export function promote(state: WorkingState, layout: WireLayout): WorkingState {
  return { ...state, hard: layout.objects.map(copyObject), soft: [] };
}

export function clearHard(state: WorkingState): WorkingState {
  return { ...state, hard: [] };
}

export function addSoft(state: WorkingState, chip: SoftChip): WorkingState {
  return { ...state, soft: [...state.soft.map(copyChip), copyChip(chip)] };
}

export function removeSoft(state: WorkingState, index: number): WorkingState {
  return { ...state, soft: state.soft.filter((_, i) => i !== index).map(copyChip) };
}

export function withCount(state: WorkingState, count: number): WorkingState {
  if (!Number.isInteger(count) || count < 1) {
    throw new RangeError(`count must be a positive integer, got ${count}`);
  }
  return { ...state, count };
}

export function withSeed(state: WorkingState, seed: number): WorkingState {
  if (!Number.isInteger(seed)) {
    throw new RangeError(`seed must be an integer, got ${seed}`);
  }
  return { ...state, seed };
}

/** Deterministic fresh seed so "reshuffle" is reproducible from the state. */
export function bumpSeed(state: WorkingState): WorkingState {
  return { ...state, seed: (state.seed * 48271 + 1) % 2147483647 };
}

/** Request body for the current constraints; empty lists are omitted. */
export function toRequestBody(state: WorkingState, format: OutputFormat): GenerateBody {
  const body: GenerateBody = { count: state.count, seed: state.seed, format };
  if (state.hard.length > 0) {
    body.hard = state.hard.map(copyObject);
  }
  if (state.soft.length > 0) {
    body.soft = state.soft.map(copyChip);
  }
  return body;
}
