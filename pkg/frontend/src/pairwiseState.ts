/**
 * State machine for one blinded pairwise comparison: the two responses
 * are shown in the server-randomized order under neutral labels, and the
 * annotator's pick is mapped back to the canonical A/B before submission.
 */

import type { PairwiseTaskView, VoteChoice, VotePayload } from './types.js';
import { validateVotePayload } from './validation.js';

export interface PresentedResponse {
  label: string; // neutral: "Response 1" / "Response 2"
  canonical: 'A' | 'B';
  text: string;
}

export function presentation(task: PairwiseTaskView): [PresentedResponse, PresentedResponse] {
  const byCanonical = { A: task.response_a, B: task.response_b } as const;
  const [first, second] = task.presented_order;
  return [
    { label: 'Response 1', canonical: first, text: byCanonical[first] },
    { label: 'Response 2', canonical: second, text: byCanonical[second] },
  ];
}

export class PairwiseSession {
  readonly task: PairwiseTaskView;
  readonly presented: [PresentedResponse, PresentedResponse];
  private choice: VoteChoice | null = null;
  private submitted = false;

  constructor(task: PairwiseTaskView) {
    this.task = task;
    this.presented = presentation(task);
  }

  get currentChoice(): VoteChoice | null {
    return this.choice;
  }

  get isSubmitted(): boolean {
    return this.submitted;
  }

  /** Pick by on-screen position (0 or 1); the canonical side is derived. */
  choosePresented(index: 0 | 1): void {
    if (!this.submitted) {
      this.choice = this.presented[index].canonical;
    }
  }

  chooseTie(): void {
    if (!this.submitted) {
      this.choice = 'Tie';
    }
  }

  get canSubmit(): boolean {
    return !this.submitted && this.choice !== null;
  }

  buildPayload(annotatorId: string): VotePayload {
    if (!this.canSubmit) {
      throw new Error('no choice made: submit is disabled');
    }
    const payload: VotePayload = {
      task_id: this.task.task_id,
      annotator_id: annotatorId,
      choice: this.choice as VoteChoice,
    };
    const verdict = validateVotePayload(payload);
    if (!verdict.valid) {
      throw new Error(`payload failed client validation: ${verdict.issues.join('; ')}`);
    }
    return payload;
  }

  /** Double submits are structurally impossible: the first one latches. */
  markSubmitted(): void {
    this.submitted = true;
  }

  /** Keys: 1/2 pick a presented response, t picks Tie, Enter submits. */
  applyKey(key: string, annotatorId: string): VotePayload | null {
    if (key === '1' || key === '2') {
      this.choosePresented((parseInt(key, 10) - 1) as 0 | 1);
      return null;
    }
    if (key.toLowerCase() === 't') {
      this.chooseTie();
      return null;
    }
    if (key === 'Enter' && this.canSubmit) {
      const payload = this.buildPayload(annotatorId);
      this.markSubmitted();
      return payload;
    }
    return null;
  }
}
