// Browser glue: binds the controller to the DOM. Served by the review
// service under /ui/; the session id comes from the query string
// (?session=...), created beforehand via the HTTP API or CLI tooling.

import { ReviewApi } from './api.js';
import { ReviewController, type ControllerState } from './controller.js';
import { actionFor } from './keyboard.js';
import {
  escapeHtml,
  flagBadges,
  machineTextHtml,
  progressFraction,
  progressLabel,
  submitDisabled,
  textDirection,
} from './render.js';
import { ISSUE_TAGS } from './types.js';

function querySessionId(): string | null {
  return new URLSearchParams(window.location.search).get('session');
}

function renderApp(root: HTMLElement, controller: ReviewController, state: ControllerState): void {
  if (state.phase === 'loading') {
    root.innerHTML = '<p class="status">Loading…</p>';
    return;
  }
  if (state.phase === 'done') {
    const progress = state.progress ?? { done: 0, total: 0 };
    root.innerHTML = `
      <section class="summary">
        <h2>Session complete</h2>
        <p>${progressLabel(progress)} units reviewed. Thank you!</p>
      </section>`;
    return;
  }
  if (state.phase === 'error' || !state.unit) {
    root.innerHTML = `
      <p class="banner error">${escapeHtml(state.banner ?? 'Unknown error')}</p>
      <button id="retry">Retry</button>`;
    root.querySelector('#retry')?.addEventListener('click', () => void controller.loadCurrent());
    return;
  }

  const unit = state.unit;
  const direction = textDirection(unit.key.lang);
  const banner = state.banner
    ? `<p class="banner">${escapeHtml(state.banner)}</p>`
    : '';
  const tagButtons = ISSUE_TAGS.map((tag, index) => {
    const active = state.tags.has(tag) ? ' active' : '';
    return `<button class="tag${active}" data-tag="${tag}">${index + 1} ${tag}</button>`;
  }).join('');

  root.innerHTML = `
    ${banner}
    <header>
      <progress value="${progressFraction(unit.progress)}" max="1"></progress>
      <span class="progress-label">${progressLabel(unit.progress)}</span>
      <span class="flags">${flagBadges(unit.report)}</span>
    </header>
    <section class="panes">
      <div class="pane">
        <h3>English source</h3>
        <div class="source-text" dir="ltr">${escapeHtml(unit.source_text)}</div>
      </div>
      <div class="pane">
        <h3>Machine translation</h3>
        ${machineTextHtml(unit)}
      </div>
    </section>
    <section class="editor">
      <h3>Correction</h3>
      <textarea id="draft" dir="${direction}" lang="${escapeHtml(unit.key.lang)}"
        rows="4">${escapeHtml(state.draft)}</textarea>
      <div class="tags">${tagButtons}</div>
      <input id="note" type="text" placeholder="Note (optional)"
        value="${escapeHtml(state.note)}" />
      <div class="actions">
        <button id="accept" title="a">Accept as-is</button>
        <button id="submit" title="Enter" ${
          submitDisabled(unit.source_text, state.draft) ? 'disabled' : ''
        }>Submit</button>
      </div>
    </section>`;

  const draft = root.querySelector<HTMLTextAreaElement>('#draft');
  draft?.addEventListener('input', () => controller.setDraft(draft.value));
  const note = root.querySelector<HTMLInputElement>('#note');
  note?.addEventListener('input', () => controller.setNote(note.value));
  root.querySelector('#accept')?.addEventListener('click', () => void controller.acceptAsIs());
  root.querySelector('#submit')?.addEventListener('click', () => void controller.submit());
  for (const button of root.querySelectorAll<HTMLButtonElement>('button.tag')) {
    button.addEventListener('click', () => {
      controller.toggleTag(button.dataset.tag as (typeof ISSUE_TAGS)[number]);
    });
  }
}

export function boot(): void {
  const root = document.getElementById('app');
  if (!root) return;
  const sessionId = querySessionId();
  if (!sessionId) {
    root.innerHTML =
      '<p class="banner error">Missing ?session=… — create a session via POST /sessions first.</p>';
    return;
  }
  const controller = new ReviewController(new ReviewApi(''), sessionId);
  controller.subscribe((state) => renderApp(root, controller, state));

  document.addEventListener('keydown', (event) => {
    const target = event.target as HTMLElement | null;
    const inEditor =
      target instanceof HTMLTextAreaElement || target instanceof HTMLInputElement;
    const action = actionFor({
      key: event.key,
      ctrlOrMeta: event.ctrlKey || event.metaKey,
      inEditor,
    });
    if (!action) return;
    event.preventDefault();
    switch (action.kind) {
      case 'accept':
        void controller.acceptAsIs();
        break;
      case 'edit':
        document.querySelector<HTMLTextAreaElement>('#draft')?.focus();
        break;
      case 'submit':
        void controller.submit();
        break;
      case 'toggle-tag':
        controller.toggleTag(action.tag);
        break;
    }
  });

  void controller.loadCurrent();
}

boot();
