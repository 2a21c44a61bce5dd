/**
 * State machine for one acceptability rating task: two 3-point scales
 * (is the QA visually correct; does the rationale justify the answer)
 * with the auto-reject rule enforced locally, so a rejected QA clears
 * and disables the rationale scale.
 */

import type { RatingPayload, RatingTaskView, RatingValue } from './types.js';
import { validateRatingPayload } from './validation.js';

export const REJECT: RatingValue = 1;

export class RatingSession {
  readonly task: RatingTaskView;
  private qa: RatingValue | null = null;
  private qar: RatingValue | null = null;
  private submitted = false;

  constructor(task: RatingTaskView) {
    this.task = task;
  }

  get qaRating(): RatingValue | null {
    return this.qa;
  }

  get qarRating(): RatingValue | null {
    return this.qar;
  }

  get isSubmitted(): boolean {
    return this.submitted;
  }

  /** The rationale scale is disabled exactly when the QA was rejected. */
  get qarDisabled(): boolean {
    return this.qa === REJECT;
  }

  setQa(value: RatingValue): void {
    if (this.submitted) {
      return;
    }
    this.qa = value;
    if (value === REJECT) {
      this.qar = null; // auto-reject clears the second criterion
    }
  }

  /** Ignored while the control is disabled; the UI cannot set it. */
  setQar(value: RatingValue): void {
    if (this.submitted || this.qarDisabled) {
      return;
    }
    this.qar = value;
  }

  get canSubmit(): boolean {
    if (this.submitted || this.qa === null) {
      return false;
    }
    return this.qa === REJECT ? this.qar === null : this.qar !== null;
  }

  buildPayload(annotatorId: string): RatingPayload {
    if (!this.canSubmit) {
      throw new Error('rating incomplete: submit is disabled');
    }
    const payload: RatingPayload = {
      task_id: this.task.task_id,
      annotator_id: annotatorId,
      qa_rating: this.qa as number,
      qar_rating: this.qar,
    };
    const verdict = validateRatingPayload(payload);
    if (!verdict.valid) {
      throw new Error(`payload failed client validation: ${verdict.issues.join('; ')}`);
    }
    return payload;
  }

  markSubmitted(): void {
    this.submitted = true;
  }

  /**
   * Keyboard path: "q1".."q3" via keys 1-3 when the QA scale has focus,
   * "r1".."r3" for the rationale scale, Enter to submit. Returns the
   * payload on a completing Enter, else null.
   */
  applyKey(key: string, focus: 'qa' | 'qar', annotatorId: string): RatingPayload | null {
    if (key >= '1' && key <= '3') {
      const value = parseInt(key, 10) as RatingValue;
      if (focus === 'qa') {
        this.setQa(value);
      } else {
        this.setQar(value);
      }
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
