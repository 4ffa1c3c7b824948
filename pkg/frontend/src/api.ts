import type {
  HealthInfo,
  PatientDetailResponse,
  PatientPayload,
  PatientSummary,
  PredictResponse,
  PrototypeInfo,
} from "./types";

export class ServiceError extends Error {
  status: number;
  fieldErrors: { field: string; message: string }[];

  constructor(status: number, message: string,
              fieldErrors: { field: string; message: string }[] = []) {
    super(message);
    this.status = status;
    this.fieldErrors = fieldErrors;
  }
}

async function parseError(res: Response): Promise<ServiceError> {
  let detail: unknown;
  try {
    detail = (await res.json()).detail;
  } catch {
    return new ServiceError(res.status, res.statusText);
  }
  if (Array.isArray(detail)) {
    const fields = detail.map((d) => ({
      field: String(d.field ?? ""),
      message: String(d.message ?? ""),
    }));
    return new ServiceError(res.status, fields.map((f) => f.message).join("; "), fields);
  }
  return new ServiceError(res.status, String(detail));
}

export class ApiClient {
  constructor(readonly baseUrl: string) {}

  private async get<T>(path: string): Promise<T> {
    const res = await fetch(`${this.baseUrl}${path}`);
    if (!res.ok) throw await parseError(res);
    return res.json() as Promise<T>;
  }

  health(): Promise<HealthInfo> {
    return this.get("/api/health");
  }

  prototypes(): Promise<PrototypeInfo[]> {
    return this.get("/api/prototypes");
  }

  patients(): Promise<PatientSummary[]> {
    return this.get("/api/patients");
  }

  patient(id: string): Promise<PatientDetailResponse> {
    return this.get(`/api/patients/${encodeURIComponent(id)}`);
  }

  async predict(body: PatientPayload, withTrajectory = true): Promise<PredictResponse> {
    const res = await fetch(
      `${this.baseUrl}/api/predict?trajectory=${withTrajectory}`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(body),
      },
    );
    if (!res.ok) throw await parseError(res);
    return res.json() as Promise<PredictResponse>;
  }
}
