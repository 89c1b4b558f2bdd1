/**
 * DOM rendering for the candidate gallery and the constraints panel.
 *
 * Candidate SVGs come from the service renderer; the constraints preview is
 * drawn client-side so it stays live while editing before regenerating.
 */

import type { Candidate } from "./api.js";
import { constraintSvg } from "./canvas.js";
import type { WorkingState } from "./state.js";

export interface GalleryHandlers {
  onPromote: (candidate: Candidate) => void;
}

export function renderGallery(
  container: HTMLElement,
  candidates: readonly Candidate[],
  handlers: GalleryHandlers,
): void {
  container.replaceChildren();
  candidates.forEach((candidate, index) => {
    const card = document.createElement("figure");
    card.className = "candidate";

    const frame = document.createElement("div");
    frame.className = "candidate-svg";
    frame.innerHTML = candidate.svg ?? "";
    card.appendChild(frame);

    const caption = document.createElement("figcaption");
    const label = document.createElement("span");
    label.textContent = `#${index + 1} (${candidate.layout.objects.length} objects)`;
    caption.appendChild(label);

    const button = document.createElement("button");
    button.type = "button";
    button.textContent = "Promote";
    button.title = "Use this layout as the hard constraints for the next round";
    button.addEventListener("click", () => handlers.onPromote(candidate));
    caption.appendChild(button);

    card.appendChild(caption);
    container.appendChild(card);
  });
}

export interface ConstraintHandlers {
  onClearHard: () => void;
  onRemoveSoft: (index: number) => void;
}

export function renderConstraints(
  listContainer: HTMLElement,
  previewContainer: HTMLElement,
  state: WorkingState,
  aspect: number,
  categories: readonly string[],
  handlers: ConstraintHandlers,
): void {
  listContainer.replaceChildren();

  const hardRow = document.createElement("div");
  hardRow.className = "constraint-row";
  const hardLabel = document.createElement("span");
  hardLabel.textContent =
    state.hard.length === 0
      ? "No hard constraints; candidates start from scratch."
      : `Hard prefix: ${state.hard.length} objects (${state.hard.map((o) => o.category).join(", ")})`;
  hardRow.appendChild(hardLabel);
  if (state.hard.length > 0) {
    const clear = document.createElement("button");
    clear.type = "button";
    clear.textContent = "Clear";
    clear.addEventListener("click", handlers.onClearHard);
    hardRow.appendChild(clear);
  }
  listContainer.appendChild(hardRow);

  state.soft.forEach((chip, index) => {
    const row = document.createElement("div");
    row.className = "constraint-row soft-chip";
    const label = document.createElement("span");
    const size = chip.size ? ` ~ ${chip.size[0].toFixed(2)} x ${chip.size[1].toFixed(2)}` : "";
    label.textContent = `then ${chip.category}${size}`;
    row.appendChild(label);
    const remove = document.createElement("button");
    remove.type = "button";
    remove.textContent = "Remove";
    remove.addEventListener("click", () => handlers.onRemoveSoft(index));
    row.appendChild(remove);
    listContainer.appendChild(row);
  });

  previewContainer.innerHTML =
    state.hard.length === 0 ? "" : constraintSvg(state.hard, aspect, 200, categories);
}

export function renderStatus(container: HTMLElement, text: string, isError = false): void {
  container.textContent = text;
  container.classList.toggle("error", isError);
}
