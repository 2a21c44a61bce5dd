/**
 * Client-side mirror of the service's payload rules. The UI refuses to
 * send anything this module rejects; the contract tests pin it against
 * recorded server verdicts so the two can't drift silently.
 */

import { z } from 'zod';

const rating = z.number().int().min(1).max(3);

export const ratingPayloadSchema = z
  .object({
    task_id: z.string().min(1),
    annotator_id: z.string().min(1),
    qa_rating: rating,
    qar_rating: rating.nullable(),
  })
  .superRefine((payload, ctx) => {
    if (payload.qa_rating === 1 && payload.qar_rating !== null) {
      ctx.addIssue({
        code: z.ZodIssueCode.custom,
        message: 'qar_rating must be absent when qa is rejected',
        path: ['qar_rating'],
      });
    }
    if (payload.qa_rating !== 1 && payload.qar_rating === null) {
      ctx.addIssue({
        code: z.ZodIssueCode.custom,
        message: 'qar_rating required when qa passed',
        path: ['qar_rating'],
      });
    }
  });

export const votePayloadSchema = z.object({
  task_id: z.string().min(1),
  annotator_id: z.string().min(1),
  choice: z.enum(['A', 'B', 'Tie']),
});

export interface Verdict {
  valid: boolean;
  issues: string[];
}

function toVerdict(result: { success: boolean; error?: z.ZodError }): Verdict {
  if (result.success) {
    return { valid: true, issues: [] };
  }
  return { valid: false, issues: result.error!.issues.map((i) => i.message) };
}

export function validateRatingPayload(payload: unknown): Verdict {
  return toVerdict(ratingPayloadSchema.safeParse(payload));
}

export function validateVotePayload(payload: unknown): Verdict {
  return toVerdict(votePayloadSchema.safeParse(payload));
}
