/**
 * View model for one annotation form.
 *
 * Pure state, no DOM: one selection slot per served statement, submit
 * allowed only when every slot is filled. `judgments` returns the user's
 * selections verbatim — the client never fabricates or pads a judgment,
 * mirroring the server's incomplete_judgments rule.
 */

import type { FormPayload, Judgment } from "./protocol.js";

export class IncompleteSelectionError extends Error {
  constructor(missing: number) {
    super(`${missing} statement(s) still need a yes/no selection`);
    this.name = "IncompleteSelectionError";
  }
}

export interface FormView {
  form: FormPayload;
  selections: (Judgment | null)[];
  /** Client-side load stamp (ms); the authoritative timing is server-side. */
  loadedAt: number;
}

export function createFormView(
  form: FormPayload,
  now: () => number = Date.now,
): FormView {
  return {
    form,
    selections: form.statements.map(() => null),
    loadedAt: now(),
  };
}

export function select(view: FormView, row: number, judgment: Judgment): void {
  if (row < 0 || row >= view.selections.length) {
    throw new RangeError(`row ${row} out of range for ${view.selections.length} statements`);
  }
  view.selections[row] = judgment;
}

export function submitEnabled(view: FormView): boolean {
  return view.selections.every((s) => s !== null);
}

export function judgments(view: FormView): Judgment[] {
  const missing = view.selections.filter((s) => s === null).length;
  if (missing > 0) {
    throw new IncompleteSelectionError(missing);
  }
  return view.selections.map((s) => s as Judgment);
}

export function elapsedSeconds(
  view: FormView,
  now: () => number = Date.now,
): number {
  return (now() - view.loadedAt) / 1000;
}
