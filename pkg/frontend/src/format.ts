// Single rendering path for every service-sourced number.  The exact wire
// value rides along in a data attribute so tests (and curious users via the
// inspector) can trace any displayed figure back to its response.

export function fmtRisk(v: number): string {
  return v.toFixed(4);
}

export function fmtStat(v: number): string {
  return Number.isInteger(v) ? String(v) : v.toFixed(2);
}

export function fmtSimilarity(v: number): string {
  return v.toFixed(3);
}

export function fmtRate(v: number | null): string {
  return v === null ? "n/a" : `${(v * 100).toFixed(1)}%`;
}
