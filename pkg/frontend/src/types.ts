/** Server payload shapes for the /api/v1 endpoints. */

export interface DecisionPayload {
  id: string;
  proposed_action: string;
  severity: string;
  confidence: number;
  parity_gap: number;
  compliance_flags: string[];
  timestamp: string;
  rationale: string;
}

export interface ReviewItem {
  decision: DecisionPayload;
  enqueued_at: string;
  deadline: string;
  status: "pending" | "approved" | "rejected" | "expired_auto_rejected";
  reviewer: string | null;
  reviewer_rationale: string | null;
  resolved_at: string | null;
}

export interface TrustPayload {
  level: string;
  override_rate: number;
  intervention_accuracy: number;
  critical_violations_in_window: number;
  window_size: number;
  window: [string, boolean][];
  recent_transitions: { from_level: string; to_level: string; reason: string }[];
}

export interface SnapshotPayload {
  lead_time_hours: { mean: number; median: number };
  deploys_per_week: number;
  change_failure_rate: number;
  mttr_hours: number;
  coverage: number;
  detection_rate: number;
  override_rate: number;
  window: [string, string];
}

export interface MetricDelta {
  baseline: number;
  treated: number;
  percent_change: number | null;
}

export interface MetricsPayload {
  run_id: string;
  scenario: string;
  seed: number;
  baseline: SnapshotPayload | null;
  current: SnapshotPayload;
  comparison: {
    per_metric: Record<string, MetricDelta>;
    ab: { statistic: number; p_value: number; method: string; n_resamples: number };
    bias_error_rates: { baseline: number; treated: number };
  };
  detections: { baseline: number; treated: number };
  blocked_noncompliant: number;
}

export interface AuditVerifyPayload {
  ok: boolean;
  broken_seq: number | null;
  length: number;
  head_digest: string;
}
