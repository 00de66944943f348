/**
 * Wire types for the feedback service.
 *
 * These mirror PROTOCOL.md at the repository root, which is the single
 * source of truth: paths and field names there are pinned, and this file
 * must follow it, never the other way around.
 */

/** One judgeable statement inside a form. */
export interface Statement {
  type: string;
  text: string;
  tooltip: string;
  /** Query token indices this statement covers; clients never interpret it. */
  covered: number[];
}

/** A question-query pair rendered as a block of statements. */
export interface FormPayload {
  id: string;
  question: string;
  query: string;
  statements: Statement[];
}

/** Reply of `GET /form/next`. */
export type NextFormReply =
  | { done: false; form: FormPayload }
  | { done: true };

/** Reply of `GET /health`. */
export interface HealthReply {
  status: string;
  forms_total: number;
  forms_submitted: number;
}

/** A single judgment as posted to the service. */
export type Judgment = "yes" | "no";

/** Body of `POST /form/<id>/submit`. */
export interface SubmitBody {
  judgments: Judgment[];
  annotator_id: string;
}

/** Success reply of `POST /form/<id>/submit`. */
export interface SubmitAck {
  ok: boolean;
  form: string;
  seq_reward: number;
  token_rewards: number[];
}

/** Error codes the service uses in `{"error": ...}` bodies. */
export type ErrorCode =
  | "bad_request"
  | "incomplete_judgments"
  | "unknown_form"
  | "already_submitted";
