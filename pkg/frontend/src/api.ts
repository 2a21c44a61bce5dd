/**
 * Thin client for the annotation-service JSON API. Payloads are validated
 * locally before any request goes out; the server stays authoritative.
 */

import type { PairwiseTaskView, RatingPayload, RatingTaskView, VotePayload } from './types.js';
import { validateRatingPayload, validateVotePayload } from './validation.js';

export class ApiError extends Error {
  readonly status: number;

  constructor(status: number, detail: string) {
    super(`API error ${status}: ${detail}`);
    this.status = status;
  }
}

export class AnnotationApi {
  private readonly endpoint: string;

  constructor(endpoint: string) {
    this.endpoint = endpoint.replace(/\/$/, '');
  }

  private async request(path: string, init?: RequestInit): Promise<any> {
    const res = await fetch(`${this.endpoint}${path}`, init);
    const body = await res.json().catch(() => ({}));
    if (!res.ok) {
      throw new ApiError(res.status, JSON.stringify(body.detail ?? body));
    }
    return body;
  }

  async nextTask(
    kind: 'rating' | 'pairwise',
    annotator: string,
  ): Promise<RatingTaskView | PairwiseTaskView | null> {
    const params = new URLSearchParams({ kind, annotator });
    const body = await this.request(`/tasks/next?${params}`);
    return body.task;
  }

  async getTask(taskId: string): Promise<RatingTaskView | PairwiseTaskView> {
    const body = await this.request(`/tasks/${encodeURIComponent(taskId)}`);
    return body.task;
  }

  async submitRating(payload: RatingPayload): Promise<void> {
    const verdict = validateRatingPayload(payload);
    if (!verdict.valid) {
      throw new Error(`refusing to send invalid rating: ${verdict.issues.join('; ')}`);
    }
    await this.request('/ratings', {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(payload),
    });
  }

  async submitVote(payload: VotePayload): Promise<void> {
    const verdict = validateVotePayload(payload);
    if (!verdict.valid) {
      throw new Error(`refusing to send invalid vote: ${verdict.issues.join('; ')}`);
    }
    await this.request('/votes', {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(payload),
    });
  }

  renderUrl(renderUri: string): string {
    return `${this.endpoint}/renders/${renderUri}`;
  }
}
