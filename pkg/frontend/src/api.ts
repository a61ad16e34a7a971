// Typed client for the session-service API. Every workbench number comes
// through here; mutations surface server errors verbatim.

import type {
  CommitPayload,
  ConceptSchema,
  CorpusStats,
  CoveragePayload,
  EvaluationPayload,
  ExemplarPayload,
  ExplanationPayload,
  GlobalStatePayload,
  InstancePayload,
  JobMetrics,
  JobState,
  MatrixPayload,
  MembersPayload,
  PartitionsPayload,
  PreviewPayload,
  PurityPayload,
  QuartilesPayload,
  QueryHit,
  SessionState,
  ThemePayload,
} from './types.js';

export class ApiRequestError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
    public detail: unknown = null,
  ) {
    super(message);
  }
}

export class ApiClient {
  constructor(
    private baseUrl: string,
    private token?: string,
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = { 'content-type': 'application/json' };
    if (this.token) headers['authorization'] = `Bearer ${this.token}`;
    const response = await fetch(`${this.baseUrl}${path}`, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const payload = await response.json().catch(() => null);
    if (!response.ok) {
      const err = (payload ?? {}) as { code?: string; message?: string; detail?: unknown };
      throw new ApiRequestError(
        response.status,
        err.code ?? 'error',
        err.message ?? `request failed with ${response.status}`,
        err.detail ?? null,
      );
    }
    return payload as T;
  }

  private get<T>(path: string): Promise<T> {
    return this.request<T>('GET', path);
  }

  // corpus -------------------------------------------------------------
  stats(): Promise<CorpusStats> {
    return this.get('/stats');
  }

  schema(): Promise<ConceptSchema> {
    return this.get('/schema');
  }

  session(): Promise<SessionState> {
    return this.get('/session');
  }

  instance(id: string): Promise<InstancePayload> {
    return this.get(`/instances/${encodeURIComponent(id)}`);
  }

  editInstanceConcepts(id: string, edits: Record<string, string>): Promise<InstancePayload> {
    return this.request('POST', `/instances/${encodeURIComponent(id)}/concepts`, { edits });
  }

  // partitions ----------------------------------------------------------
  runKmeans(k?: number, seed?: number): Promise<PartitionsPayload> {
    return this.request('POST', '/partitions/kmeans', { k, seed });
  }

  runDensity(minClusterSize?: number): Promise<PartitionsPayload> {
    return this.request('POST', '/partitions/density', { min_cluster_size: minClusterSize });
  }

  partitions(): Promise<PartitionsPayload> {
    return this.get('/partitions');
  }

  partitionMembers(pid: string, order: string, limit = 50): Promise<MembersPayload> {
    return this.get(
      `/partitions/${encodeURIComponent(pid)}/members?order=${order}&limit=${limit}`,
    );
  }

  // queries ---------------------------------------------------------------
  textQuery(text: string, k = 10, filter = 'all'): Promise<{ hits: QueryHit[] }> {
    return this.request('POST', '/query/text', { text, k, filter });
  }

  similarInstances(id: string, k = 10, filter = 'all'): Promise<{ hits: QueryHit[] }> {
    return this.request('POST', '/query/neighbors', { instance_id: id, k, filter });
  }

  // themes ------------------------------------------------------------------
  themes(): Promise<{ themes: ThemePayload[] }> {
    return this.get('/themes');
  }

  createTheme(name: string): Promise<ThemePayload> {
    return this.request('POST', '/themes', { name });
  }

  renameTheme(tid: string, name: string): Promise<ThemePayload> {
    return this.request('PATCH', `/themes/${encodeURIComponent(tid)}`, { name });
  }

  deleteTheme(tid: string): Promise<{ deleted: string; released_instances: number }> {
    return this.request('DELETE', `/themes/${encodeURIComponent(tid)}`);
  }

  themeMembers(tid: string, order: string, limit = 50): Promise<MembersPayload> {
    return this.get(`/themes/${encodeURIComponent(tid)}/members?order=${order}&limit=${limit}`);
  }

  markExample(tid: string, polarity: 'good' | 'bad', source: string): Promise<ThemePayload> {
    return this.request('POST', `/themes/${encodeURIComponent(tid)}/exemplars`, {
      polarity,
      source,
    });
  }

  removeExample(tid: string, source: string): Promise<ThemePayload> {
    return this.request('POST', `/themes/${encodeURIComponent(tid)}/exemplars/remove`, { source });
  }

  addPhrase(tid: string, text: string): Promise<ThemePayload> {
    return this.request('POST', `/themes/${encodeURIComponent(tid)}/phrases`, { text });
  }

  setExemplarConcepts(
    tid: string,
    source: string,
    concepts: Record<string, string>,
  ): Promise<ExemplarPayload> {
    return this.request('POST', `/themes/${encodeURIComponent(tid)}/exemplars/concepts`, {
      source,
      concepts,
    });
  }

  themeExplanation(tid: string, iteration?: number): Promise<ExplanationPayload> {
    const suffix = iteration === undefined ? '' : `?iteration=${iteration}`;
    return this.get(`/themes/${encodeURIComponent(tid)}/explanation${suffix}`);
  }

  // mapping ---------------------------------------------------------------
  startMapping(method: 'nesy' | 'nns', tau?: number, scope = 'full'): Promise<JobState> {
    return this.request('POST', '/mapping/run', { method, tau, scope });
  }

  job(jobId: string): Promise<JobState> {
    return this.get(`/mapping/jobs/${encodeURIComponent(jobId)}`);
  }

  jobMetrics(jobId: string): Promise<JobMetrics> {
    return this.get(`/mapping/jobs/${encodeURIComponent(jobId)}/metrics`);
  }

  commit(jobId: string): Promise<CommitPayload> {
    return this.request('POST', '/mapping/commit', { job_id: jobId });
  }

  preview(tau: number): Promise<PreviewPayload> {
    return this.get(`/mapping/preview?tau=${tau}`);
  }

  // analytics ---------------------------------------------------------------
  coverage(iteration?: number): Promise<CoveragePayload> {
    return this.get(`/analytics/coverage${iteration === undefined ? '' : `?iteration=${iteration}`}`);
  }

  purity(): Promise<PurityPayload> {
    return this.get('/analytics/purity/average');
  }

  quartiles(iteration?: number): Promise<QuartilesPayload> {
    return this.get(
      `/analytics/quartiles${iteration === undefined ? '' : `?iteration=${iteration}`}`,
    );
  }

  overlap(a: object, b: object): Promise<MatrixPayload> {
    return this.request('POST', '/analytics/overlap', { a, b });
  }

  shift(prev: number, next: number): Promise<MatrixPayload> {
    return this.get(`/analytics/shift?prev=${prev}&next=${next}`);
  }

  evaluation(gold: Record<string, string>, average = 'micro'): Promise<EvaluationPayload> {
    return this.request('POST', '/analytics/evaluation', { gold, average });
  }

  globalState(sampleSize = 2000, seed = 0): Promise<GlobalStatePayload> {
    return this.get(`/analytics/global?sample_size=${sampleSize}&seed=${seed}`);
  }

  exportSession(path: string): Promise<{ path: string; sha256: string }> {
    return this.request('POST', '/session/export', { path });
  }
}
