// Keyboard-first workflow: reviewers handle ~1000 units per language, so
// every action has a key. Bindings are inert while typing in the editor,
// except Ctrl/Cmd+Enter which always confirms.

import { ISSUE_TAGS, type IssueTag } from './types.js';

export type KeyAction =
  | { kind: 'accept' }
  | { kind: 'edit' }
  | { kind: 'submit' }
  | { kind: 'toggle-tag'; tag: IssueTag };

export interface KeyStroke {
  key: string;
  ctrlOrMeta: boolean;
  inEditor: boolean;
}

export function actionFor(stroke: KeyStroke): KeyAction | null {
  if (stroke.ctrlOrMeta && stroke.key === 'Enter') return { kind: 'submit' };
  if (stroke.inEditor) return null;
  if (stroke.key === 'a') return { kind: 'accept' };
  if (stroke.key === 'e') return { kind: 'edit' };
  if (stroke.key === 'Enter') return { kind: 'submit' };
  const index = Number.parseInt(stroke.key, 10) - 1;
  const tag = index >= 0 && index < ISSUE_TAGS.length ? ISSUE_TAGS[index] : undefined;
  if (tag) return { kind: 'toggle-tag', tag };
  return null;
}
