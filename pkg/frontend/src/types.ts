/**
 * Wire types mirroring the service JSON schema verbatim.
 * The client renders exclusively from these payloads; it never derives
 * probabilities or weights of its own.
 */

export interface DocumentJson {
  tokens: string[];
  sentences: [number, number][];
}

export interface SummarySentenceJson {
  tokens: string[];
  origin: "MODEL" | "USER" | "MIXED";
}

export interface CoverageJson {
  usage_probs: number[];
  covered_words: number[];
  covered_sentences: number[];
  threshold: number;
  empty_summary: boolean;
}

export interface HistoryEventJson {
  seq: number;
  type: string;
  detail?: Record<string, unknown>;
}

export interface SessionJson {
  id: string;
  document: DocumentJson;
  selection: number[];
  summary: SummarySentenceJson[];
  coverage: CoverageJson | null;
  aggregated: number[][];
  history: HistoryEventJson[];
}

export interface ApiErrorJson {
  code: "INVALID_REQUEST" | "NOT_FOUND" | "NO_BACKWARD_RESULT" | "MODEL_ERROR";
  message: string;
}

export type GenerationMode = "init_with" | "add_sentence" | "complete";
export type SelectionTemplate = "all" | "none" | "match";
