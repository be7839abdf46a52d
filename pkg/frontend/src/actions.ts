/**
 * Event-to-service wiring. Forward inference happens only on an explicit
 * trigger (a forward button or a trailing "..." in the draft input);
 * selection changes alone never call /generate. All backward inference is
 * server-side and arrives inside the mutation responses.
 */

import { ApiError, ServiceClient } from "./api.js";
import { Handlers, render } from "./render.js";
import {
  ViewState,
  draftRequestsCompletion,
  initialViewState,
  toggledSelection,
} from "./state.js";
import type { SessionJson } from "./types.js";

export class App {
  readonly state: ViewState = initialViewState();

  constructor(
    private readonly root: HTMLElement,
    private readonly client: ServiceClient,
  ) {}

  paint(): void {
    render(this.root, this.state, this.handlers());
  }

  async start(documentText: string): Promise<void> {
    await this.mutate(() => this.client.createSession(documentText));
  }

  private sessionId(): string {
    if (!this.state.session) throw new Error("no session");
    return this.state.session.id;
  }

  /** Runs one mutation with the single-in-flight gate and error banner. */
  private async mutate(call: () => Promise<SessionJson>): Promise<void> {
    if (this.state.pending) return;
    this.state.pending = true;
    this.state.error = null;
    this.paint();
    try {
      this.state.session = await call();
    } catch (error) {
      this.state.error =
        error instanceof ApiError
          ? `${error.code}: ${error.message}`
          : String(error);
    } finally {
      this.state.pending = false;
      this.paint();
    }
  }

  handlers(): Handlers {
    return {
      onToggleSentence: (index) => {
        void this.mutate(() =>
          this.client.setSelection(
            this.sessionId(),
            toggledSelection(this.state, index),
          ),
        );
      },
      onTemplate: (template) => {
        void this.mutate(() => this.client.applyTemplate(this.sessionId(), template));
      },
      onInitWith: (n) => {
        void this.mutate(() =>
          this.client.generate(this.sessionId(), "init_with", { n_sentences: n }),
        );
      },
      onAddSentence: () => {
        void this.mutate(() => this.client.generate(this.sessionId(), "add_sentence"));
      },
      onDraftChanged: (text) => {
        this.state.draft = text;
        if (draftRequestsCompletion(text)) {
          const prefix = text;
          this.state.draft = "";
          void this.mutate(() =>
            this.client.generate(this.sessionId(), "complete", { prefix }),
          );
        }
      },
      onStartEdit: (index) => {
        const sentence = this.state.session?.summary[index];
        if (!sentence) return;
        this.state.editBuffer = { index, text: sentence.tokens.join(" ") };
        this.paint();
      },
      onEditChanged: (text) => {
        if (this.state.editBuffer) this.state.editBuffer.text = text;
      },
      onCommitEdit: () => {
        const buffer = this.state.editBuffer;
        if (!buffer) return;
        this.state.editBuffer = null;
        void this.mutate(() =>
          this.client.editSummary(this.sessionId(), buffer.index, buffer.text),
        );
      },
      onCancelEdit: () => {
        this.state.editBuffer = null;
        this.paint();
      },
      onDelete: (index) => {
        void this.mutate(() => this.client.deleteSummary(this.sessionId(), index));
      },
      onHover: (target) => {
        this.state.hover = target;
        this.paint();
      },
      onToggleAggregation: () => {
        this.state.aggregation = !this.state.aggregation;
        this.paint();
      },
    };
  }
}
