/**
 * Annotator session: fetch a form, collect yes/no judgments, submit,
 * advance. One form in flight at a time.
 *
 * Failure handling follows the protocol: 409 means the form was judged
 * elsewhere first, so we simply move on; a network failure offers a retry
 * that re-posts the identical payload (the form id makes this idempotent —
 * if the original landed, the retry's 409 also advances).
 */

import { FeedbackClient, SubmitResult } from "./client.js";
import { createFormView, elapsedSeconds, FormView } from "./form.js";
import type { Judgment } from "./protocol.js";
import {
  renderDone,
  renderError,
  renderForm,
  renderProgress,
} from "./render.js";

function annotatorId(): string {
  const fromUrl = new URLSearchParams(window.location.search).get("annotator");
  if (fromUrl) return fromUrl;
  return `web-${Math.random().toString(36).slice(2, 8)}`;
}

export async function runApp(root: HTMLElement, baseUrl = ""): Promise<void> {
  const client = new FeedbackClient(baseUrl);
  const who = annotatorId();
  let submittedHere = 0;

  const show = (...nodes: HTMLElement[]): void => {
    root.replaceChildren(...nodes);
  };

  const nextForm = async (): Promise<void> => {
    let progress: HTMLElement;
    let reply;
    try {
      const health = await client.health();
      progress = renderProgress(health.forms_submitted, health.forms_total);
      reply = await client.nextForm(who);
    } catch (err) {
      const message = err instanceof Error ? err.message : String(err);
      show(renderError(`Could not reach the feedback service: ${message}`,
                       () => void nextForm()));
      return;
    }
    if (reply.done) {
      show(renderDone(submittedHere));
      return;
    }
    const view = createFormView(reply.form);
    show(progress, renderForm(view, (picked) => void submit(view, picked)));
  };

  const submit = async (view: FormView, picked: Judgment[]): Promise<void> => {
    const result: SubmitResult = await client.submit(view.form.id, picked, who);
    switch (result.kind) {
      case "ok":
        submittedHere += 1;
        console.info(`form ${view.form.id} saved after ` +
                     `${elapsedSeconds(view).toFixed(1)}s`);
        return nextForm();
      case "already_submitted":
        // judged elsewhere first (or our retry raced the original): advance
        return nextForm();
      case "network":
        show(renderError(
          `Submission did not go through (${result.message}). ` +
            "Retrying is safe: the service accepts each form only once.",
          () => void submit(view, picked)));
        return;
      case "rejected":
        show(renderError(
          `The service rejected the submission (${result.code}, ` +
            `status ${result.status}).`,
          () => void nextForm()));
        return;
    }
  };

  await nextForm();
}

const mount = typeof document !== "undefined"
  ? document.getElementById("app")
  : null;
if (mount) {
  void runApp(mount);
}
