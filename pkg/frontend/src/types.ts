/** Wire types served by the annotation service. Field names match the API exactly. */

export type RatingValue = 1 | 2 | 3;

export interface RatingTaskView {
  task_id: string;
  kind: 'rating';
  instance_id: string;
  render_uri: string;
  question: string;
  answer: string;
  rationale: string;
  required_annotators: number;
  state: 'open' | 'complete';
  submissions: number;
}

export type Criterion = 'correctness' | 'informativeness' | 'plausibility' | 'overall';

export interface PairwiseTaskView {
  task_id: string;
  kind: 'pairwise';
  image_uri: string;
  question: string;
  response_a: string;
  response_b: string;
  criterion: Criterion;
  randomized_order_seed: number;
  required_votes: number;
  state: 'open' | 'complete';
  submissions: number;
  presented_order: ['A' | 'B', 'A' | 'B'];
}

export interface RatingPayload {
  task_id: string;
  annotator_id: string;
  qa_rating: number;
  qar_rating: number | null;
}

export type VoteChoice = 'A' | 'B' | 'Tie';

export interface VotePayload {
  task_id: string;
  annotator_id: string;
  choice: VoteChoice;
}
