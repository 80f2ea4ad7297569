// Session state machine driving the review loop. The controller owns the
// draft and tag state for the unit at the server's cursor; the only server
// mutation it ever performs is POST /sessions/{id}/submit.

import { ConflictError, ReviewApi } from './api.js';
import { submitDisabled } from './render.js';
import type { IssueTag, PendingUnit, Progress, Submission } from './types.js';

export type Phase = 'loading' | 'reviewing' | 'done' | 'error';

export interface ControllerState {
  phase: Phase;
  unit?: PendingUnit;
  draft: string;
  tags: Set<IssueTag>;
  note: string;
  progress?: Progress;
  /** Transient banner text: conflicts, network retries. */
  banner?: string;
}

export class ReviewController {
  private state: ControllerState = { phase: 'loading', draft: '', tags: new Set(), note: '' };
  private listeners: Array<(state: ControllerState) => void> = [];

  constructor(
    private readonly api: ReviewApi,
    private readonly sessionId: string,
  ) {}

  getState(): ControllerState {
    return this.state;
  }

  subscribe(listener: (state: ControllerState) => void): void {
    this.listeners.push(listener);
  }

  private setState(next: Partial<ControllerState>): void {
    this.state = { ...this.state, ...next };
    for (const listener of this.listeners) listener(this.state);
  }

  /** Fetch the unit at the server cursor. Used at start and after a reload:
   * resuming mid-session always lands on the server's cursor, so a page
   * reload can never double-submit. */
  async loadCurrent(): Promise<void> {
    this.setState({ phase: 'loading', banner: undefined });
    try {
      const next = await this.api.nextUnit(this.sessionId);
      if (next.finished) {
        this.setState({ phase: 'done', unit: undefined, progress: next.progress, draft: '' });
        return;
      }
      this.setState({
        phase: 'reviewing',
        unit: next,
        progress: next.progress,
        // The editable correction starts as the machine translation.
        draft: next.machine_text,
        tags: new Set(),
        note: '',
      });
    } catch (error) {
      this.keepDraftWithBanner(`Could not reach the review service: ${String(error)}`);
    }
  }

  setDraft(text: string): void {
    this.setState({ draft: text });
  }

  setNote(note: string): void {
    this.setState({ note });
  }

  toggleTag(tag: IssueTag): void {
    const tags = new Set(this.state.tags);
    if (tags.has(tag)) {
      tags.delete(tag);
    } else {
      tags.add(tag);
    }
    this.setState({ tags });
  }

  canSubmit(): boolean {
    const unit = this.state.unit;
    if (this.state.phase !== 'reviewing' || !unit) return false;
    return !submitDisabled(unit.source_text, this.state.draft);
  }

  /** Accept the machine translation verbatim (no tags, no edits). */
  async acceptAsIs(): Promise<void> {
    const unit = this.state.unit;
    if (!unit) return;
    this.setState({ draft: unit.machine_text, tags: new Set(), note: '' });
    await this.submit();
  }

  async submit(): Promise<void> {
    const unit = this.state.unit;
    if (!unit || !this.canSubmit()) return;
    const submission: Submission = {
      key: unit.key,
      corrected_text: this.state.draft,
      issue_tags: [...this.state.tags].sort(),
      note: this.state.note,
    };
    try {
      await this.api.submitCorrection(this.sessionId, submission);
    } catch (error) {
      if (error instanceof ConflictError) {
        // Someone (or a duplicated tab) advanced the cursor: reload the
        // server's current unit rather than resubmitting a stale draft.
        this.setState({ banner: 'Out-of-order submission; reloaded the current unit.' });
        await this.loadCurrent();
        return;
      }
      // Network failure: keep the draft so no reviewer work is lost.
      this.keepDraftWithBanner(`Submission failed, draft kept: ${String(error)}`);
      return;
    }
    await this.loadCurrent();
  }

  private keepDraftWithBanner(banner: string): void {
    this.setState({
      phase: this.state.unit ? 'reviewing' : 'error',
      banner,
    });
  }
}
