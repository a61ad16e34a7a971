// Payload shapes of the session-service JSON API. The workbench renders
// these verbatim; it never recomputes a metric client-side.

export interface CorpusStats {
  instance_count: number;
  embedding_dim: number;
  concept_histograms: Record<string, Record<string, number>>;
  assigned_count: number;
  unassigned_count: number;
}

export type ConceptSchema = Record<string, { values: string[]; provenance: string }>;

export interface SessionState {
  iteration: number;
  phase: 'exploring' | 'mapping';
  config: Record<string, unknown>;
  partition_count: number;
  committed_iterations: number[];
}

export interface Assignment {
  theme_id: string | null;
  score?: number;
  iteration?: number;
}

export interface InstancePayload {
  id: string;
  text: string;
  concepts: Record<string, string>;
  corrected: string[];
  assignment: Assignment;
  meta: Record<string, string>;
  similarity?: number;
}

export interface PartitionSummary {
  partition_id: string;
  size: number;
  cohesion: number;
  is_noise: boolean;
}

export interface PartitionsPayload {
  partitions: PartitionSummary[];
  balance: { count: number; min: number; max: number; mean: number; ratio_max_min: number };
}

export interface MembersPayload {
  partition_id?: string;
  theme_id?: string;
  order: string;
  members: InstancePayload[];
}

export interface QueryHit {
  id: string;
  similarity: number;
  text: string;
}

export interface ExemplarPayload {
  kind: 'instance' | 'phrase';
  key: string;
  concepts: Record<string, string>;
}

export interface ThemePayload {
  theme_id: string;
  name: string;
  created_iteration: number;
  scoreable: boolean;
  mapped_count: number;
  good: ExemplarPayload[];
  bad: ExemplarPayload[];
  phrases: string[];
}

export interface JobState {
  job_id: string;
  method: string;
  scope: string;
  state: 'running' | 'done' | 'failed' | 'committed';
  progress: number;
  error?: { code: string; message: string };
  counts?: { total: number; mapped: number; unmapped: number };
  iteration?: number;
  tau?: number;
}

export interface JobMetrics {
  job_id: string;
  method: string;
  tau: number;
  coverage: number;
  average_purity: number;
  per_concept: Record<string, number>;
}

export interface CommitPayload {
  job_id: string;
  committed_iteration: number;
  iteration: number;
  coverage: number;
  partitions: PartitionSummary[];
}

export interface CoveragePayload {
  iteration: number;
  method: string;
  coverage: number;
  counts: { total: number; mapped: number };
}

export interface PurityPayload {
  iteration: number;
  average_purity: number;
  per_concept: Record<string, number>;
}

export interface QuartilesPayload {
  iteration: number;
  thresholds: number[];
  sizes: { Q1: number; Q2: number; Q3: number; All: number };
  q1_ids: string[];
  q2_ids: string[];
  q3_ids: string[];
  all_ids: string[];
}

export interface MatrixPayload {
  rows: string[];
  cols: string[];
  values: number[][];
}

export interface EvaluationPayload {
  iteration: number;
  f1_by_slice: Record<string, number>;
  judged_by_slice: Record<string, number>;
  confusion: {
    gold_labels: string[];
    pred_labels: string[];
    counts: number[][];
    normalized: number[][];
  };
  average: string;
}

export interface ExplanationPayload {
  theme_id: string;
  name?: string;
  member_count: number;
  tokens: { token: string; count: number }[];
  concept_histograms: Record<string, Record<string, { count: number; percent: number }>>;
  digest: { top: string[]; bottom: string[] };
}

export interface GlobalStatePayload {
  distribution: Record<string, { count: number; percent: number }>;
  coverage: number;
  balance: { themes: number; min: number; max: number; mean: number };
  projection: { ids: string[]; coords: number[][] };
}

export interface PreviewPayload {
  tau: number;
  coverage: number;
}

export interface ApiError {
  code: string;
  message: string;
  detail: unknown;
}
