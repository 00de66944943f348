/**
 * Thin HTTP client for the feedback service.
 *
 * Every call goes through an injectable `fetch` so tests can stub the
 * transport. Submission failures come back as values, not exceptions:
 * the app advances on `already_submitted` (someone else judged the form
 * first, or a retry landed after the original went through) and can
 * re-post the identical payload after a network failure — the form id is
 * the idempotency key, the first submission wins server-side.
 */

import type {
  ErrorCode,
  HealthReply,
  Judgment,
  NextFormReply,
  SubmitAck,
} from "./protocol.js";

export type FetchLike = (
  input: string,
  init?: { method?: string; headers?: Record<string, string>; body?: string },
) => Promise<{ status: number; json(): Promise<unknown> }>;

export type SubmitResult =
  | { kind: "ok"; ack: SubmitAck }
  | { kind: "already_submitted" }
  | { kind: "rejected"; code: ErrorCode | "unknown"; status: number }
  | { kind: "network"; message: string };

export class FeedbackClient {
  private readonly base: string;
  private readonly fetchImpl: FetchLike;

  constructor(baseUrl: string, fetchImpl: FetchLike = fetch as FetchLike) {
    this.base = baseUrl.replace(/\/$/, "");
    this.fetchImpl = fetchImpl;
  }

  async health(): Promise<HealthReply> {
    const resp = await this.fetchImpl(`${this.base}/health`);
    if (resp.status !== 200) {
      throw new Error(`health check failed with status ${resp.status}`);
    }
    return (await resp.json()) as HealthReply;
  }

  async nextForm(annotatorId: string): Promise<NextFormReply> {
    const query = annotatorId
      ? `?annotator_id=${encodeURIComponent(annotatorId)}`
      : "";
    const resp = await this.fetchImpl(`${this.base}/form/next${query}`);
    if (resp.status !== 200) {
      throw new Error(`form/next failed with status ${resp.status}`);
    }
    return (await resp.json()) as NextFormReply;
  }

  /** Post judgments exactly as selected; the payload is never padded. */
  async submit(
    formId: string,
    judgments: Judgment[],
    annotatorId: string,
  ): Promise<SubmitResult> {
    let resp;
    try {
      resp = await this.fetchImpl(
        `${this.base}/form/${encodeURIComponent(formId)}/submit`,
        {
          method: "POST",
          headers: { "Content-Type": "application/json" },
          body: JSON.stringify({
            judgments,
            annotator_id: annotatorId,
          }),
        },
      );
    } catch (err) {
      return {
        kind: "network",
        message: err instanceof Error ? err.message : String(err),
      };
    }

    if (resp.status === 200) {
      return { kind: "ok", ack: (await resp.json()) as SubmitAck };
    }
    if (resp.status === 409) {
      return { kind: "already_submitted" };
    }
    let code: ErrorCode | "unknown" = "unknown";
    try {
      const body = (await resp.json()) as { error?: ErrorCode };
      if (body.error) code = body.error;
    } catch {
      // non-JSON error body; keep "unknown"
    }
    return { kind: "rejected", code, status: resp.status };
  }

  exportLogUrl(): string {
    return `${this.base}/export/log`;
  }
}
