import type {
  CohortInfo,
  HealthInfo,
  PatientDetailResponse,
  PredictResponse,
  PrototypeInfo,
} from "../types";

export function cohort(j: number, size: number, ids: string[]): CohortInfo {
  return {
    prototype: j,
    size,
    positive_rate: size === 0 ? null : 0.25,
    static_means: size === 0 ? {} : { age: 61.5, bmi: 27.1 },
    member_ids: ids,
  };
}

export function prototypeFixture(k: number, emptySlot = -1): PrototypeInfo[] {
  return Array.from({ length: k }, (_, j) => ({
    index: j,
    source_id: `p${j.toString().padStart(3, "0")}`,
    risk: 0.1 + j * 0.2,
    source_statics: { age: 60 + j, bmi: 25 + j },
    source_label: j % 2,
    cohort: j === emptySlot
      ? cohort(j, 0, [])
      : cohort(j, 10 + j, [`m${j}a`, `m${j}b`]),
  }));
}

export const healthFixture: HealthInfo = {
  status: "ok",
  k: 4,
  indicators: ["creatinine", "urea"],
  statics: ["age", "bmi"],
  dataset_mounted: true,
};

export const detailFixture: PatientDetailResponse = {
  id: "p007",
  label: 1,
  indicators: ["creatinine", "urea"],
  statics: ["age", "bmi"],
  visits: [
    { values: [1.1, null], mask: [true, false] },
    { values: [1.3, 6.2], mask: [true, true] },
    { values: [null, 6.4], mask: [false, true] },
  ],
  static: [63, 28.5],
};

export function predictFixture(tPoints: number, headline = 0.7321): PredictResponse {
  const trajectory = Array.from({ length: tPoints }, (_, i) => ({
    t: i + 1,
    similarity: [0.2, 0.9, 0.4, 0.1],
    nearest_prototype: i < tPoints / 2 ? 1 : 2,
    risk: i === tPoints - 1 ? headline : 0.3 + (0.4 * i) / tPoints,
  }));
  return {
    risk: headline,
    similarity: [0.21, 0.93, 0.44, 0.12],
    nearest_prototype: 1,
    trajectory,
  };
}
