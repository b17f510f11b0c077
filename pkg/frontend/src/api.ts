import type {
  AuditVerifyPayload,
  MetricsPayload,
  ReviewItem,
  TrustPayload,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const response = await fetch(url, {
    headers: { "content-type": "application/json" },
    ...init,
  });
  if (!response.ok) {
    let code = "error";
    let message = `${response.status}`;
    try {
      const body = (await response.json()) as { code?: string; message?: string };
      code = body.code ?? code;
      message = body.message ?? message;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiError(response.status, code, message);
  }
  return (await response.json()) as T;
}

export class ApiClient {
  constructor(private base: string = "") {}

  listReviews(): Promise<ReviewItem[]> {
    return request<ReviewItem[]>(`${this.base}/api/v1/reviews`);
  }

  resolveReview(
    id: string,
    resolution: "approve" | "reject",
    reviewer: string,
    rationale: string,
  ): Promise<ReviewItem> {
    return request<ReviewItem>(
      `${this.base}/api/v1/reviews/${encodeURIComponent(id)}/resolve`,
      { method: "POST", body: JSON.stringify({ resolution, reviewer, rationale }) },
    );
  }

  trust(): Promise<TrustPayload> {
    return request<TrustPayload>(`${this.base}/api/v1/trust`);
  }

  /** Latest run metrics; null when nothing has been simulated yet. */
  async metricsLatest(): Promise<MetricsPayload | null> {
    try {
      return await request<MetricsPayload>(`${this.base}/api/v1/metrics/latest`);
    } catch (err) {
      if (err instanceof ApiError && err.status === 404) return null;
      throw err;
    }
  }

  auditVerify(): Promise<AuditVerifyPayload> {
    return request<AuditVerifyPayload>(`${this.base}/api/v1/audit/verify`);
  }

  simulate(scenario: string, seed?: number): Promise<unknown> {
    return request(`${this.base}/api/v1/simulate`, {
      method: "POST",
      body: JSON.stringify(seed === undefined ? { scenario } : { scenario, seed }),
    });
  }
}
