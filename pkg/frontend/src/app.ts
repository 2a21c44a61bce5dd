/**
 * Single-page annotator app. Pulls the next open task from the service,
 * renders it, and submits through the validated API client. The service
 * endpoint comes from ?endpoint=... (defaults to same origin).
 */

import { AnnotationApi, ApiError } from './api.js';
import { PairwiseSession } from './pairwiseState.js';
import { RatingSession } from './ratingState.js';
import { colorForId, cssColor, segmentBrackets } from './palette.js';
import type { PairwiseTaskView, RatingTaskView, RatingValue } from './types.js';

const SCALE: ReadonlyArray<[RatingValue, string]> = [
  [1, 'reject'],
  [2, 'maybe'],
  [3, 'accept'],
];

function coloredText(text: string): DocumentFragment {
  const fragment = document.createDocumentFragment();
  for (const segment of segmentBrackets(text)) {
    if (segment.regionId === null) {
      fragment.append(segment.text);
    } else {
      const span = document.createElement('span');
      span.textContent = segment.text;
      span.style.color = cssColor(colorForId(segment.regionId));
      span.style.fontWeight = 'bold';
      fragment.append(span);
    }
  }
  return fragment;
}

function scaleGroup(
  name: string,
  legendText: string,
  onPick: (value: RatingValue) => void,
): { root: HTMLFieldSetElement; clear: () => void } {
  const root = document.createElement('fieldset');
  const legend = document.createElement('legend');
  legend.textContent = legendText;
  root.append(legend);
  const inputs: HTMLInputElement[] = [];
  for (const [value, label] of SCALE) {
    const wrap = document.createElement('label');
    const input = document.createElement('input');
    input.type = 'radio';
    input.name = name;
    input.value = String(value);
    input.addEventListener('change', () => onPick(value));
    wrap.append(input, ` ${value} (${label})`);
    root.append(wrap);
    inputs.push(input);
  }
  return {
    root,
    clear: () => inputs.forEach((i) => (i.checked = false)),
  };
}

class App {
  private readonly api: AnnotationApi;
  private readonly annotator: string;
  private readonly kind: 'rating' | 'pairwise';
  private readonly root: HTMLElement;

  constructor(root: HTMLElement) {
    const params = new URLSearchParams(window.location.search);
    this.api = new AnnotationApi(params.get('endpoint') ?? '');
    this.annotator = params.get('annotator') ?? `anon-${Math.random().toString(36).slice(2, 8)}`;
    this.kind = params.get('kind') === 'pairwise' ? 'pairwise' : 'rating';
    this.root = root;
  }

  async run(): Promise<void> {
    for (;;) {
      let task;
      try {
        task = await this.api.nextTask(this.kind, this.annotator);
      } catch (err) {
        this.message(`Cannot reach the service: ${err}`, true);
        return;
      }
      if (!task) {
        this.message('No open tasks. Thanks!');
        return;
      }
      if (task.kind === 'rating') {
        await this.runRating(task as RatingTaskView);
      } else {
        await this.runPairwise(task as PairwiseTaskView);
      }
    }
  }

  private message(text: string, isError = false): void {
    this.root.replaceChildren();
    const p = document.createElement('p');
    p.textContent = text;
    if (isError) {
      p.className = 'error';
    }
    this.root.append(p);
  }

  private taskImage(uri: string): HTMLImageElement {
    const img = document.createElement('img');
    img.src = this.api.renderUrl(uri);
    img.alt = 'task image with highlighted regions';
    img.addEventListener('error', () => {
      const retry = document.createElement('button');
      retry.textContent = 'Image failed to load; retry';
      retry.addEventListener('click', () => {
        img.src = img.src;
        retry.remove();
      });
      img.after(retry);
    });
    return img;
  }

  private runRating(task: RatingTaskView): Promise<void> {
    return new Promise((resolve) => {
      const session = new RatingSession(task);
      this.root.replaceChildren();

      this.root.append(this.taskImage(task.render_uri));
      for (const [label, text] of [
        ['Question', task.question],
        ['Answer', task.answer],
        ['Rationale', task.rationale],
      ] as const) {
        const p = document.createElement('p');
        const b = document.createElement('b');
        b.textContent = `${label}: `;
        p.append(b, coloredText(text));
        this.root.append(p);
      }

      const submit = document.createElement('button');
      submit.textContent = 'Submit rating';

      const sync = () => {
        qarScale.root.disabled = session.qarDisabled;
        if (session.qarDisabled) {
          qarScale.clear();
        }
        submit.disabled = !session.canSubmit;
      };
      const qaScale = scaleGroup('qa', 'Is the question/answer visually correct?', (v) => {
        session.setQa(v);
        sync();
      });
      const qarScale = scaleGroup('qar', 'Does the rationale justify the answer?', (v) => {
        session.setQar(v);
        sync();
      });
      submit.disabled = true;
      submit.addEventListener('click', async () => {
        if (!session.canSubmit) {
          return;
        }
        const payload = session.buildPayload(this.annotator);
        session.markSubmitted();
        try {
          await this.api.submitRating(payload);
        } catch (err) {
          if (!(err instanceof ApiError)) {
            throw err;
          }
          this.message(String(err), true);
        }
        resolve();
      });
      this.root.append(qaScale.root, qarScale.root, submit);
      sync();
    });
  }

  private runPairwise(task: PairwiseTaskView): Promise<void> {
    return new Promise((resolve) => {
      const session = new PairwiseSession(task);
      this.root.replaceChildren();

      this.root.append(this.taskImage(task.image_uri));
      const q = document.createElement('p');
      q.append(document.createElement('b'));
      (q.firstChild as HTMLElement).textContent = 'Question: ';
      q.append(coloredText(task.question));
      this.root.append(q);

      const criterion = document.createElement('p');
      criterion.textContent = `Which response is better on: ${task.criterion}?`;
      this.root.append(criterion);

      const submit = document.createElement('button');
      submit.textContent = 'Submit vote';
      submit.disabled = true;

      const options = document.createElement('div');
      session.presented.forEach((presented, index) => {
        const card = document.createElement('label');
        card.className = 'response-card';
        const input = document.createElement('input');
        input.type = 'radio';
        input.name = 'pairwise';
        input.addEventListener('change', () => {
          session.choosePresented(index as 0 | 1);
          submit.disabled = !session.canSubmit;
        });
        const title = document.createElement('b');
        title.textContent = presented.label;
        const body = document.createElement('p');
        body.append(coloredText(presented.text));
        card.append(input, title, body);
        options.append(card);
      });
      const tie = document.createElement('label');
      const tieInput = document.createElement('input');
      tieInput.type = 'radio';
      tieInput.name = 'pairwise';
      tieInput.addEventListener('change', () => {
        session.chooseTie();
        submit.disabled = !session.canSubmit;
      });
      tie.append(tieInput, ' Tie: same quality');
      options.append(tie);
      this.root.append(options);

      submit.addEventListener('click', async () => {
        if (!session.canSubmit) {
          return;
        }
        const payload = session.buildPayload(this.annotator);
        session.markSubmitted();
        try {
          await this.api.submitVote(payload);
        } catch (err) {
          if (!(err instanceof ApiError)) {
            throw err;
          }
          this.message(String(err), true);
        }
        resolve();
      });
      this.root.append(submit);
    });
  }
}

const rootElement = document.getElementById('app');
if (rootElement) {
  new App(rootElement).run().catch((err) => {
    console.error(err);
  });
}
