/**
 * Entry point: wires the API client, working state, and DOM together.
 *
 * The service origin comes from the `?service=` query parameter and defaults
 * to the local development server.
 */

import { ApiClient, type Candidate } from "./api.js";
import { renderConstraints, renderGallery, renderStatus } from "./gallery.js";
import {
  addSoft,
  bumpSeed,
  clearHard,
  initialState,
  promote,
  removeSoft,
  toRequestBody,
  withCount,
  withSeed,
  type WorkingState,
} from "./state.js";

const DEFAULT_SERVICE = "http://127.0.0.1:8000";
const DEFAULT_ASPECT = 0.773;

function element<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

function serviceUrl(): string {
  return new URLSearchParams(window.location.search).get("service") ?? DEFAULT_SERVICE;
}

async function start(): Promise<void> {
  const client = new ApiClient(serviceUrl());
  const status = element<HTMLElement>("status");
  const gallery = element<HTMLElement>("gallery");
  const constraintList = element<HTMLElement>("constraints");
  const preview = element<HTMLElement>("preview");
  const categorySelect = element<HTMLSelectElement>("soft-category");
  const sizeW = element<HTMLInputElement>("soft-w");
  const sizeH = element<HTMLInputElement>("soft-h");
  const countInput = element<HTMLInputElement>("count");
  const seedInput = element<HTMLInputElement>("seed");

  let state: WorkingState = initialState();
  let aspect = DEFAULT_ASPECT;
  let categories: string[] = [];

  countInput.value = String(state.count);
  seedInput.value = String(state.seed);

  function syncConstraints(): void {
    renderConstraints(constraintList, preview, state, aspect, categories, {
      onClearHard: () => {
        state = clearHard(state);
        syncConstraints();
      },
      onRemoveSoft: (index) => {
        state = removeSoft(state, index);
        syncConstraints();
      },
    });
  }

  async function regenerate(): Promise<void> {
    renderStatus(status, "Generating...");
    try {
      const response = await client.generate(toRequestBody(state, "svg"));
      const first: Candidate | undefined = response.candidates[0];
      if (first) {
        aspect = first.layout.canvas.aspect;
      }
      renderGallery(gallery, response.candidates, {
        onPromote: (candidate) => {
          state = bumpSeed(promote(state, candidate.layout));
          seedInput.value = String(state.seed);
          syncConstraints();
          void regenerate();
        },
      });
      renderStatus(status, `${response.candidates.length} candidates (seed ${state.seed})`);
    } catch (err) {
      renderStatus(status, (err as Error).message, true);
    }
    syncConstraints();
  }

  element<HTMLButtonElement>("generate").addEventListener("click", () => {
    state = withCount(state, Number(countInput.value));
    state = withSeed(state, Number(seedInput.value));
    void regenerate();
  });

  element<HTMLButtonElement>("reshuffle").addEventListener("click", () => {
    state = bumpSeed(state);
    seedInput.value = String(state.seed);
    void regenerate();
  });

  element<HTMLButtonElement>("add-soft").addEventListener("click", () => {
    const category = categorySelect.value;
    if (!category) {
      return;
    }
    const w = Number(sizeW.value);
    const h = Number(sizeH.value);
    const size: [number, number] | undefined =
      sizeW.value !== "" && sizeH.value !== "" && w > 0 && h > 0 ? [w, h] : undefined;
    state = addSoft(state, size ? { category, size } : { category });
    syncConstraints();
  });

  try {
    const health = await client.health();
    categories = await client.categories();
    categorySelect.replaceChildren(
      ...categories.map((name) => {
        const option = document.createElement("option");
        option.value = name;
        option.textContent = name;
        return option;
      }),
    );
    renderStatus(status, `Connected; checkpoint ${health.checkpoint.slice(0, 12)}`);
    syncConstraints();
  } catch (err) {
    renderStatus(status, `Cannot reach service at ${client.baseUrl}: ${(err as Error).message}`, true);
  }
}

void start();
