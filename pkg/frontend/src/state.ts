/**
 * Local view state. Everything model-derived lives in the session snapshot
 * straight off the wire; this file only tracks what the user is doing with
 * it right now (hover, edit buffer, toggles, one pending request).
 */

import type { SessionJson } from "./types.js";

export type HoverTarget =
  | { kind: "source"; index: number }
  | { kind: "output"; index: number }
  | null;

export interface EditBuffer {
  index: number;
  text: string;
}

export interface ViewState {
  session: SessionJson | null;
  hover: HoverTarget;
  aggregation: boolean;
  editBuffer: EditBuffer | null;
  pending: boolean;
  draft: string;
  error: string | null;
}

export function initialViewState(): ViewState {
  return {
    session: null,
    hover: null,
    aggregation: true,
    editBuffer: null,
    pending: false,
    draft: "",
    error: null,
  };
}

/** Sentence indices whose proxies carry the red coverage border. */
export function coveredSentences(state: ViewState): Set<number> {
  const coverage = state.session?.coverage;
  return new Set(coverage ? coverage.covered_sentences : []);
}

/** Word positions with the red usage underline. */
export function coveredWords(state: ViewState): Set<number> {
  const coverage = state.session?.coverage;
  return new Set(coverage ? coverage.covered_words : []);
}

export function selectedSentences(state: ViewState): Set<number> {
  return new Set(state.session ? state.session.selection : []);
}

/** Toggling one sentence in the current blue selection. */
export function toggledSelection(state: ViewState, sentence: number): number[] {
  const current = selectedSentences(state);
  if (current.has(sentence)) {
    current.delete(sentence);
  } else {
    current.add(sentence);
  }
  return [...current].sort((a, b) => a - b);
}

/** True when the draft input's trailing ellipsis asks for a completion. */
export function draftRequestsCompletion(draft: string): boolean {
  return draft.trimEnd().endsWith("...") && draft.trim() !== "...";
}
