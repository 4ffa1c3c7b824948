// Wire types mirroring the service's JSON responses.  The UI never derives
// a number itself; everything rendered comes from one of these shapes.

export interface HealthInfo {
  status: string;
  k: number;
  indicators: string[];
  statics: string[];
  dataset_mounted: boolean;
}

export interface CohortInfo {
  prototype: number;
  size: number;
  positive_rate: number | null;
  static_means: Record<string, number>;
  member_ids: string[];
}

export interface PrototypeInfo {
  index: number;
  source_id: string;
  risk: number;
  source_statics: Record<string, number> | null;
  source_label: number | null;
  cohort: CohortInfo | null;
}

export interface PatientSummary {
  id: string;
  label: number;
  n_visits: number;
  meta: Record<string, unknown>;
}

export interface VisitPayload {
  values: (number | null)[];
  mask?: boolean[];
}

export interface PatientPayload {
  id?: string;
  visits: VisitPayload[];
  static: number[];
  label?: number;
}

export interface PatientDetailResponse extends PatientPayload {
  indicators: string[];
  statics: string[];
}

export interface TrajectoryPoint {
  t: number;
  similarity: number[];
  nearest_prototype: number;
  risk: number;
}

export interface PredictResponse {
  risk: number;
  similarity: number[];
  nearest_prototype: number;
  trajectory?: TrajectoryPoint[];
}

export interface FieldError {
  field: string;
  message: string;
}
