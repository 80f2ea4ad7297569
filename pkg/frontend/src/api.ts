// Thin typed client over the review service. All server mutation in the app
// goes through submitCorrection; everything else is a read.

import type { LanguageProgress, NextUnit, Progress, Submission } from './types.js';

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ConflictError extends Error {}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

async function raiseForStatus(response: Response): Promise<void> {
  if (response.ok) return;
  let detail = response.statusText;
  try {
    const body = (await response.json()) as { detail?: unknown };
    if (typeof body.detail === 'string') detail = body.detail;
  } catch {
    // non-JSON error body; keep the status text
  }
  if (response.status === 409) throw new ConflictError(detail);
  throw new ApiError(response.status, detail);
}

export class ReviewApi {
  constructor(
    private readonly baseUrl: string = '',
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  async nextUnit(sessionId: string): Promise<NextUnit> {
    const response = await this.fetchImpl(`${this.baseUrl}/sessions/${sessionId}/next`);
    await raiseForStatus(response);
    return (await response.json()) as NextUnit;
  }

  async submitCorrection(sessionId: string, submission: Submission): Promise<Progress> {
    const response = await this.fetchImpl(`${this.baseUrl}/sessions/${sessionId}/submit`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(submission),
    });
    await raiseForStatus(response);
    const body = (await response.json()) as { progress: Progress };
    return body.progress;
  }

  async languageProgress(lang: string): Promise<LanguageProgress> {
    const response = await this.fetchImpl(`${this.baseUrl}/progress/${lang}`);
    await raiseForStatus(response);
    return (await response.json()) as LanguageProgress;
  }
}
