/**
 * Live integration against a running annotation service. Skipped unless
 * ANNOTATION_ENDPOINT is set, e.g.
 *
 *   regionqar serve-annotation --run-dir runs/demo --port 8099 &
 *   ANNOTATION_ENDPOINT=http://127.0.0.1:8099 npm test
 */

import { describe, expect, it } from 'vitest';

import { AnnotationApi, ApiError } from '../src/api.js';
import { PairwiseSession } from '../src/pairwiseState.js';
import { RatingSession } from '../src/ratingState.js';
import type { PairwiseTaskView, RatingTaskView } from '../src/types.js';

const endpoint = process.env.ANNOTATION_ENDPOINT;

describe.skipIf(!endpoint)('live service', () => {
  const api = new AnnotationApi(endpoint ?? '');

  it('completes rating sessions that the server accepts', async () => {
    for (let k = 0; k < 3; k++) {
      const annotator = `it-rater-${Date.now()}-${k}`;
      const task = (await api.nextTask('rating', annotator)) as RatingTaskView | null;
      if (!task) {
        return; // queue drained by earlier runs; creation is idempotent
      }
      const session = new RatingSession(task);
      session.setQa(((k % 3) + 1) as 1 | 2 | 3);
      if (!session.qarDisabled) {
        session.setQar(3);
      }
      const payload = session.buildPayload(annotator);
      await api.submitRating(payload); // throws on any server rejection
      session.markSubmitted();
      expect(session.isSubmitted).toBe(true);
    }
  });

  it('server enforces one rating per annotator', async () => {
    const annotator = `it-dup-${Date.now()}`;
    const task = (await api.nextTask('rating', annotator)) as RatingTaskView | null;
    if (!task) {
      return;
    }
    const first = new RatingSession(task);
    first.setQa(2);
    first.setQar(2);
    await api.submitRating(first.buildPayload(annotator));
    const again = new RatingSession(task);
    again.setQa(3);
    again.setQar(3);
    await expect(api.submitRating(again.buildPayload(annotator))).rejects.toThrow(ApiError);
  });

  it('runs a pairwise vote end to end', async () => {
    const createResp = await fetch(`${endpoint}/admin/create_tasks`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({
        kind: 'pairwise',
        items: [
          {
            task_key: `it-${Date.now()}`,
            image_uri: 'annotation_renders/none.png',
            question: 'Which answer fits the scene?',
            response_a: 'First candidate answer.',
            response_b: 'Second candidate answer.',
          },
        ],
        criterion: 'overall',
      }),
    });
    expect(createResp.ok).toBe(true);
    const { task_ids } = await createResp.json();
    const annotator = `it-voter-${Date.now()}`;
    const task = (await api.getTask(task_ids[0])) as PairwiseTaskView;
    const session = new PairwiseSession(task);
    session.choosePresented(1);
    await api.submitVote(session.buildPayload(annotator));
    session.markSubmitted();
    expect(session.isSubmitted).toBe(true);
  });
});
