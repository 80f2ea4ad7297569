// Pure rendering helpers, DOM-free so they are unit-testable.

import type { EvidenceSpan, PendingUnit, Progress, ValidationReport } from './types.js';

/** Languages written in the Arabic script render right-to-left. */
const RTL_LANGS = new Set(['ar', 'ur']);

export function isRtl(lang: string): boolean {
  return RTL_LANGS.has(lang);
}

export function textDirection(lang: string): 'rtl' | 'ltr' {
  return isRtl(lang) ? 'rtl' : 'ltr';
}

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;');
}

/**
 * Wrap evidence spans in <mark>. Span boundaries are codepoint indices (the
 * server counts codepoints, not UTF-16 units), so the text is sliced as a
 * codepoint array. Overlapping spans are merged.
 */
export function highlightSpans(text: string, spans: EvidenceSpan[]): string {
  const codepoints = Array.from(text);
  const bounds = spans
    .map(([start, end]) => [Math.max(0, start), Math.min(codepoints.length, end)] as const)
    .filter(([start, end]) => start < end)
    .sort((a, b) => a[0] - b[0]);
  const merged: Array<[number, number]> = [];
  for (const [start, end] of bounds) {
    const last = merged[merged.length - 1];
    if (last && start <= last[1]) {
      last[1] = Math.max(last[1], end);
    } else {
      merged.push([start, end]);
    }
  }
  let html = '';
  let cursor = 0;
  for (const [start, end] of merged) {
    html += escapeHtml(codepoints.slice(cursor, start).join(''));
    html += `<mark>${escapeHtml(codepoints.slice(start, end).join(''))}</mark>`;
    cursor = end;
  }
  html += escapeHtml(codepoints.slice(cursor).join(''));
  return html;
}

export function allEvidenceSpans(report: ValidationReport): EvidenceSpan[] {
  return Object.values(report.detail).flat();
}

export function progressLabel(progress: Progress): string {
  return `${progress.done} / ${progress.total}`;
}

export function progressFraction(progress: Progress): number {
  return progress.total === 0 ? 1 : progress.done / progress.total;
}

/** True when submitting must be disabled: empty correction of non-empty source. */
export function submitDisabled(sourceText: string, correctedText: string): boolean {
  return sourceText.length > 0 && correctedText.length === 0;
}

export function flagBadges(report: ValidationReport): string {
  return report.flags
    .map((flag) => `<span class="flag" data-flag="${escapeHtml(flag)}">${escapeHtml(flag)}</span>`)
    .join(' ');
}

/** The machine translation panel: flag evidence highlighted, RTL when needed. */
export function machineTextHtml(unit: PendingUnit): string {
  const direction = textDirection(unit.key.lang);
  const body = highlightSpans(unit.machine_text, allEvidenceSpans(unit.report));
  return `<div class="machine-text" dir="${direction}" lang="${escapeHtml(unit.key.lang)}">${body}</div>`;
}
