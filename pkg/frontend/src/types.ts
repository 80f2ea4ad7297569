// Wire types mirroring the review service HTTP/JSON API.

export interface UnitKey {
  record_id: string;
  turn_index: number;
  lang: string;
}

/** Evidence span in codepoint indices: [start, end, text]. */
export type EvidenceSpan = [number, number, string];

export interface ValidationReport {
  flags: string[];
  latin_ratio: number;
  detail: Record<string, EvidenceSpan[]>;
}

export interface Progress {
  done: number;
  total: number;
}

export interface PendingUnit {
  finished: false;
  key: UnitKey;
  source_text: string;
  machine_text: string;
  report: ValidationReport;
  progress: Progress;
}

export interface FinishedSession {
  finished: true;
  progress: Progress;
}

export type NextUnit = PendingUnit | FinishedSession;

export const ISSUE_TAGS = [
  'Punctuation',
  'Gender',
  'Untranslated',
  'Grammar',
  'Nunnation',
  'Other',
] as const;

export type IssueTag = (typeof ISSUE_TAGS)[number];

export interface Submission {
  key: UnitKey;
  corrected_text: string;
  issue_tags: IssueTag[];
  note: string;
}

export interface LanguageProgress {
  reviewed: number;
  flagged: number;
  remaining: number;
  tag_histogram: Record<string, number>;
}
