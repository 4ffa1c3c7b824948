import type { FieldError, PatientPayload } from "./types";

// Client-side schema check so an invalid draft produces field-level messages
// before any request leaves the browser.  Mirrors the service's rules: at
// least one visit, rectangular visit rows of the expected width, numeric or
// null cells (null = unobserved), numeric statics of the expected count.

export function validateDraft(
  draft: PatientPayload,
  nIndicators: number,
  nStatics: number,
): FieldError[] {
  const errors: FieldError[] = [];
  if (draft.visits.length === 0) {
    errors.push({ field: "visits", message: "at least one visit is required" });
  }
  draft.visits.forEach((visit, t) => {
    if (visit.values.length !== nIndicators) {
      errors.push({
        field: `visits.${t}.values`,
        message: `expected ${nIndicators} values, got ${visit.values.length}`,
      });
      return;
    }
    visit.values.forEach((v, j) => {
      if (v !== null && !Number.isFinite(v)) {
        errors.push({
          field: `visits.${t}.values.${j}`,
          message: "must be a number or empty",
        });
      }
      if (v === null && visit.mask && visit.mask[j]) {
        errors.push({
          field: `visits.${t}.values.${j}`,
          message: "marked observed but has no value",
        });
      }
    });
  });
  if (draft.static.length !== nStatics) {
    errors.push({
      field: "static",
      message: `expected ${nStatics} statics, got ${draft.static.length}`,
    });
  } else {
    draft.static.forEach((v, m) => {
      if (!Number.isFinite(v)) {
        errors.push({ field: `static.${m}`, message: "must be a number" });
      }
    });
  }
  return errors;
}
