/**
 * Pure DOM rendering from (session snapshot, view state).
 *
 * Layout: source panel | source proxies | ribbon canvas | output proxies |
 * output panel, plus a control strip. Blue (selection) and red (coverage)
 * never share a style class. Ribbon geometry is computed from sentence
 * indices, so it renders identically with or without a layout engine.
 */

import {
  ViewState,
  coveredSentences,
  coveredWords,
  selectedSentences,
} from "./state.js";

export interface Handlers {
  onToggleSentence(index: number): void;
  onTemplate(template: "all" | "none" | "match"): void;
  onInitWith(n: number): void;
  onAddSentence(): void;
  onDraftChanged(text: string): void;
  onStartEdit(index: number): void;
  onEditChanged(text: string): void;
  onCommitEdit(): void;
  onCancelEdit(): void;
  onDelete(index: number): void;
  onHover(target: ViewState["hover"]): void;
  onToggleAggregation(): void;
}

const ROW_HEIGHT = 28;
const RIBBON_WIDTH_SCALE = 6;
const RIBBON_MIN_WEIGHT = 0.05;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function render(root: HTMLElement, state: ViewState, handlers: Handlers): void {
  root.textContent = "";
  root.appendChild(renderControls(state, handlers));
  if (state.error) {
    const banner = el("div", "error-banner", state.error);
    banner.setAttribute("data-role", "error");
    root.appendChild(banner);
  }
  if (!state.session) {
    root.appendChild(el("p", "placeholder", "no session loaded"));
    return;
  }
  const workspace = el("div", "workspace");
  workspace.appendChild(renderSourcePanel(state, handlers));
  workspace.appendChild(renderProxies(state, handlers, "source"));
  workspace.appendChild(renderRibbons(state, handlers));
  workspace.appendChild(renderProxies(state, handlers, "output"));
  workspace.appendChild(renderOutputPanel(state, handlers));
  root.appendChild(workspace);
}

function renderControls(state: ViewState, handlers: Handlers): HTMLElement {
  const bar = el("div", "controls");
  const pending = state.pending;

  const nInput = el("input") as HTMLInputElement;
  nInput.type = "number";
  nInput.min = "1";
  nInput.value = "3";
  nInput.setAttribute("data-role", "init-count");
  bar.appendChild(nInput);

  const initButton = el("button", "forward-action", "init with");
  initButton.setAttribute("data-role", "init-with");
  initButton.disabled = pending || !state.session;
  initButton.addEventListener("click", () =>
    handlers.onInitWith(parseInt(nInput.value, 10) || 1),
  );
  bar.appendChild(initButton);

  const addButton = el("button", "forward-action", "add sentence");
  addButton.setAttribute("data-role", "add-sentence");
  addButton.disabled = pending || !state.session;
  addButton.addEventListener("click", () => handlers.onAddSentence());
  bar.appendChild(addButton);

  for (const template of ["all", "none", "match"] as const) {
    const button = el("button", "template-action", template);
    button.setAttribute("data-role", `template-${template}`);
    const noCoverage = template === "match" && !state.session?.coverage;
    button.disabled = pending || !state.session || noCoverage;
    button.addEventListener("click", () => handlers.onTemplate(template));
    bar.appendChild(button);
  }

  const aggregation = el("label", "aggregation-toggle");
  const checkbox = el("input") as HTMLInputElement;
  checkbox.type = "checkbox";
  checkbox.checked = state.aggregation;
  checkbox.setAttribute("data-role", "aggregation");
  checkbox.addEventListener("change", () => handlers.onToggleAggregation());
  aggregation.appendChild(checkbox);
  aggregation.appendChild(document.createTextNode(" aggregate sentences"));
  bar.appendChild(aggregation);

  const draft = el("input", "draft-input") as HTMLInputElement;
  draft.type = "text";
  draft.placeholder = 'start a sentence, end with "..." to let the model finish';
  draft.value = state.draft;
  draft.disabled = pending || !state.session;
  draft.setAttribute("data-role", "draft");
  draft.addEventListener("input", () => handlers.onDraftChanged(draft.value));
  bar.appendChild(draft);

  return bar;
}

function renderSourcePanel(state: ViewState, handlers: Handlers): HTMLElement {
  const session = state.session!;
  const panel = el("div", "panel source-panel");
  const selected = selectedSentences(state);
  const covered = coveredWords(state);

  session.document.sentences.forEach(([start, stop], index) => {
    const sentenceBox = el(
      "span",
      state.aggregation ? "source-sentence" : "source-sentence word-level",
    );
    sentenceBox.setAttribute("data-role", "source-sentence");
    sentenceBox.setAttribute("data-index", String(index));
    if (selected.has(index)) sentenceBox.classList.add("sel-blue");
    sentenceBox.addEventListener("click", () => handlers.onToggleSentence(index));
    sentenceBox.addEventListener("mouseenter", () =>
      handlers.onHover({ kind: "source", index }),
    );
    sentenceBox.addEventListener("mouseleave", () => handlers.onHover(null));

    for (let i = start; i < stop; i += 1) {
      const wordClass = state.aggregation ? "word" : "word word-box";
      const word = el("span", wordClass, session.document.tokens[i]);
      word.setAttribute("data-role", "source-word");
      word.setAttribute("data-position", String(i));
      if (covered.has(i)) word.classList.add("cov-red");
      sentenceBox.appendChild(word);
      sentenceBox.appendChild(document.createTextNode(" "));
    }
    panel.appendChild(sentenceBox);
  });
  return panel;
}

function renderProxies(
  state: ViewState,
  handlers: Handlers,
  side: "source" | "output",
): HTMLElement {
  const session = state.session!;
  const column = el("div", `proxies proxies-${side}`);
  const covered = coveredSentences(state);
  const selected = selectedSentences(state);
  const count =
    side === "source" ? session.document.sentences.length : session.summary.length;

  for (let index = 0; index < count; index += 1) {
    const proxy = el("div", "proxy");
    proxy.setAttribute("data-role", `proxy-${side}`);
    proxy.setAttribute("data-index", String(index));
    if (side === "source") {
      if (covered.has(index)) proxy.classList.add("cov-red-border");
      if (selected.has(index)) proxy.classList.add("sel-blue");
      proxy.addEventListener("click", () => handlers.onToggleSentence(index));
    }
    proxy.addEventListener("mouseenter", () =>
      handlers.onHover({ kind: side === "source" ? "source" : "output", index }),
    );
    proxy.addEventListener("mouseleave", () => handlers.onHover(null));
    column.appendChild(proxy);
  }
  return column;
}

function renderRibbons(state: ViewState, handlers: Handlers): SVGSVGElement {
  const session = state.session!;
  const svg = document.createElementNS("http://www.w3.org/2000/svg", "svg");
  svg.setAttribute("class", "ribbons");
  const rows = Math.max(session.document.sentences.length, session.summary.length);
  svg.setAttribute("viewBox", `0 0 100 ${Math.max(rows, 1) * ROW_HEIGHT}`);

  if (session.summary.length === 0) return svg;

  session.aggregated.forEach((row, s) => {
    row.forEach((weight, o) => {
      if (weight < RIBBON_MIN_WEIGHT) return;
      const y1 = s * ROW_HEIGHT + ROW_HEIGHT / 2;
      const y2 = o * ROW_HEIGHT + ROW_HEIGHT / 2;
      const path = document.createElementNS("http://www.w3.org/2000/svg", "path");
      path.setAttribute("d", `M 0 ${y1} C 50 ${y1}, 50 ${y2}, 100 ${y2}`);
      path.setAttribute("fill", "none");
      path.setAttribute("stroke-width", String(weight * RIBBON_WIDTH_SCALE));
      path.setAttribute("data-role", "ribbon");
      path.setAttribute("data-source", String(s));
      path.setAttribute("data-output", String(o));
      let klass = "ribbon";
      const hover = state.hover;
      if (
        hover &&
        ((hover.kind === "source" && hover.index === s) ||
          (hover.kind === "output" && hover.index === o))
      ) {
        klass += " ribbon-highlight";
      }
      path.setAttribute("class", klass);
      path.addEventListener("mouseenter", () =>
        handlers.onHover({ kind: "source", index: s }),
      );
      svg.appendChild(path);
    });
  });
  return svg;
}

function renderOutputPanel(state: ViewState, handlers: Handlers): HTMLElement {
  const session = state.session!;
  const panel = el("div", "panel output-panel");

  session.summary.forEach((sentence, index) => {
    const box = el("div", "output-sentence");
    box.setAttribute("data-role", "output-sentence");
    box.setAttribute("data-index", String(index));
    box.setAttribute("data-origin", sentence.origin);
    box.addEventListener("mouseenter", () =>
      handlers.onHover({ kind: "output", index }),
    );
    box.addEventListener("mouseleave", () => handlers.onHover(null));

    if (state.editBuffer && state.editBuffer.index === index) {
      const input = el("input", "edit-input") as HTMLInputElement;
      input.type = "text";
      input.value = state.editBuffer.text;
      input.setAttribute("data-role", "edit-input");
      input.addEventListener("input", () => handlers.onEditChanged(input.value));
      input.addEventListener("keydown", (event) => {
        if (event.key === "Enter") handlers.onCommitEdit();
        if (event.key === "Escape") handlers.onCancelEdit();
      });
      box.appendChild(input);
    } else {
      box.appendChild(el("span", "output-text", sentence.tokens.join(" ")));
      const edit = el("button", "edit-button", "edit");
      edit.setAttribute("data-role", "edit");
      edit.setAttribute("data-index", String(index));
      edit.disabled = state.pending;
      edit.addEventListener("click", () => handlers.onStartEdit(index));
      box.appendChild(edit);
      const remove = el("button", "delete-button", "delete");
      remove.setAttribute("data-role", "delete");
      remove.setAttribute("data-index", String(index));
      remove.disabled = state.pending;
      remove.addEventListener("click", () => handlers.onDelete(index));
      box.appendChild(remove);
    }
    panel.appendChild(box);
  });
  return panel;
}
