/**
 * DOM rendering for the annotator form.
 *
 * One list row per served statement, radio pair per row, and a submit
 * button that stays disabled until every row has a selection. Tooltips
 * ride on the native `title` attribute so they appear on hover without
 * extra machinery.
 */

import type { Judgment } from "./protocol.js";
import { FormView, judgments, select, submitEnabled } from "./form.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function radio(
  name: string,
  value: Judgment,
  label: string,
  onPick: () => void,
): HTMLLabelElement {
  const wrap = el("label", "judgment-choice");
  const input = el("input");
  input.type = "radio";
  input.name = name;
  input.value = value;
  input.addEventListener("change", onPick);
  wrap.appendChild(input);
  wrap.appendChild(el("span", undefined, label));
  return wrap;
}

/**
 * Render a form into a detached element. Radio changes update `view` in
 * place and re-gate the submit button; the button calls `onSubmit` with
 * the user's selections exactly as made.
 */
export function renderForm(
  view: FormView,
  onSubmit: (picked: Judgment[]) => void,
): HTMLElement {
  const root = el("div", "form-card");
  root.appendChild(el("h2", "question", view.form.question));
  root.appendChild(el("p", "instructions",
    "Judge every statement: does it correctly reflect the question?"));

  const list = el("ol", "statements");
  view.form.statements.forEach((statement, row) => {
    const item = el("li", "statement-row");
    const text = el("span", "statement-text", statement.text);
    if (statement.tooltip) {
      text.title = statement.tooltip;
      text.classList.add("has-tooltip");
    }
    item.appendChild(text);

    const choices = el("span", "judgment-choices");
    for (const value of ["yes", "no"] as const) {
      choices.appendChild(
        radio(`statement-${row}`, value, value === "yes" ? "Yes" : "No", () => {
          select(view, row, value);
          button.disabled = !submitEnabled(view);
        }),
      );
    }
    item.appendChild(choices);
    list.appendChild(item);
  });
  root.appendChild(list);

  const button = el("button", "submit-button", "Submit judgments");
  button.disabled = !submitEnabled(view);
  button.addEventListener("click", () => {
    if (!submitEnabled(view)) return;
    button.disabled = true;
    onSubmit(judgments(view));
  });
  root.appendChild(button);
  return root;
}

export function renderProgress(submitted: number, total: number): HTMLElement {
  return el("p", "progress", `${submitted} of ${total} forms judged`);
}

export function renderDone(submittedHere: number): HTMLElement {
  const root = el("div", "done-card");
  root.appendChild(el("h2", undefined, "All done"));
  root.appendChild(el("p", undefined,
    `No more forms to judge. You submitted ${submittedHere} this session — thank you.`));
  return root;
}

export function renderError(message: string, onRetry: () => void): HTMLElement {
  const root = el("div", "error-card");
  root.appendChild(el("p", "error-text", message));
  const button = el("button", "retry-button", "Retry");
  button.addEventListener("click", onRetry);
  root.appendChild(button);
  return root;
}
