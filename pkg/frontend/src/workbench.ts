// Flow controller: binds the API client to the screen renderers.
//
// Rules of the house:
//   * server truth only -- after a mutation the affected payloads are
//     re-fetched and re-rendered; there is no optimistic UI;
//   * one in-flight mutation at a time;
//   * while a mapping job runs, intervention controls are disabled and a
//     lockout banner is shown (the server enforces this with 409s; the
//     banner mirrors it).

import { ApiClient, ApiRequestError } from './api.js';
import * as render from './render.js';
import type {
  JobMetrics,
  JobState,
  MembersPayload,
  PartitionsPayload,
  QueryHit,
  SessionState,
  ThemePayload,
} from './types.js';

export interface Screen {
  banner: string;
  stats: string;
  partitions: string;
  members: string;
  hits: string;
  themes: string;
  job: string;
  tauPreview: string;
  dashboards: string;
  error: string;
}

type Sink = (screen: Screen) => void;

export class Workbench {
  session: SessionState | null = null;
  themes: ThemePayload[] = [];
  activeJob: JobState | null = null;
  activeJobMetrics: JobMetrics | null = null;
  private screen: Screen = {
    banner: '',
    stats: '',
    partitions: '',
    members: '',
    hits: '',
    themes: '',
    job: '',
    tauPreview: '',
    dashboards: '',
    error: '',
  };
  private mutating = false;

  constructor(
    public api: ApiClient,
    private sink: Sink = () => {},
  ) {}

  get lockedOut(): boolean {
    return this.session?.phase === 'mapping';
  }

  get rendered(): Screen {
    return { ...this.screen };
  }

  private emit(patch: Partial<Screen>): void {
    this.screen = { ...this.screen, ...patch, error: patch.error ?? '' };
    this.sink(this.screen);
  }

  private async mutate<T>(run: () => Promise<T>): Promise<T> {
    if (this.mutating) throw new Error('another mutation is in flight');
    this.mutating = true;
    try {
      return await run();
    } catch (err) {
      if (err instanceof ApiRequestError) {
        this.emit({ error: render.renderErrorBanner(err.code, err.message) });
      }
      throw err;
    } finally {
      this.mutating = false;
    }
  }

  // ------------------------------------------------------------------
  // session + corpus
  // ------------------------------------------------------------------

  async refresh(): Promise<void> {
    this.session = await this.api.session();
    const stats = await this.api.stats();
    this.emit({
      banner: render.renderLockoutBanner(this.session.phase),
      stats: render.renderStats(stats),
    });
  }

  // ------------------------------------------------------------------
  // exploratory operations
  // ------------------------------------------------------------------

  async findPartitions(
    algorithm: 'kmeans' | 'density',
    options: { k?: number; seed?: number; minClusterSize?: number } = {},
  ): Promise<PartitionsPayload> {
    const payload = await this.mutate(() =>
      algorithm === 'kmeans'
        ? this.api.runKmeans(options.k, options.seed)
        : this.api.runDensity(options.minClusterSize),
    );
    this.emit({ partitions: render.renderPartitions(payload) });
    return payload;
  }

  async openPartition(pid: string, order: string): Promise<MembersPayload> {
    const payload = await this.api.partitionMembers(pid, order);
    this.emit({ members: render.renderMemberList(payload) });
    return payload;
  }

  async textQuery(text: string, k = 10): Promise<QueryHit[]> {
    const { hits } = await this.api.textQuery(text, k);
    this.emit({ hits: render.renderQueryHits(hits) });
    return hits;
  }

  async similarInstances(id: string, k = 10): Promise<QueryHit[]> {
    const { hits } = await this.api.similarInstances(id, k);
    this.emit({ hits: render.renderQueryHits(hits) });
    return hits;
  }

  async listThemes(): Promise<ThemePayload[]> {
    const { themes } = await this.api.themes();
    this.themes = themes;
    this.emit({ themes: render.renderThemeList(themes) });
    return themes;
  }

  async listThemeMembers(tid: string, order: string): Promise<MembersPayload> {
    const payload = await this.api.themeMembers(tid, order);
    this.emit({ members: render.renderMemberList(payload) });
    return payload;
  }

  // ------------------------------------------------------------------
  // intervention operations (server ack, then re-list)
  // ------------------------------------------------------------------

  async createTheme(name: string): Promise<ThemePayload> {
    const theme = await this.mutate(() => this.api.createTheme(name));
    await this.listThemes();
    return theme;
  }

  async renameTheme(tid: string, name: string): Promise<ThemePayload> {
    const theme = await this.mutate(() => this.api.renameTheme(tid, name));
    await this.listThemes();
    return theme;
  }

  async deleteTheme(tid: string): Promise<number> {
    const { released_instances } = await this.mutate(() => this.api.deleteTheme(tid));
    await this.listThemes();
    return released_instances;
  }

  async markExample(tid: string, polarity: 'good' | 'bad', source: string): Promise<ThemePayload> {
    await this.mutate(() => this.api.markExample(tid, polarity, source));
    const themes = await this.listThemes();
    return themes.find((t) => t.theme_id === tid)!;
  }

  async removeExample(tid: string, source: string): Promise<void> {
    await this.mutate(() => this.api.removeExample(tid, source));
    await this.listThemes();
  }

  async addPhrase(tid: string, text: string): Promise<void> {
    await this.mutate(() => this.api.addPhrase(tid, text));
    await this.listThemes();
  }

  async correctInstanceConcepts(id: string, edits: Record<string, string>): Promise<void> {
    await this.mutate(() => this.api.editInstanceConcepts(id, edits));
  }

  async annotateExemplar(
    tid: string,
    source: string,
    concepts: Record<string, string>,
  ): Promise<void> {
    await this.mutate(() => this.api.setExemplarConcepts(tid, source, concepts));
    await this.listThemes();
  }

  // ------------------------------------------------------------------
  // mapping console
  // ------------------------------------------------------------------

  async previewTau(tau: number): Promise<number> {
    const { coverage } = await this.api.preview(tau);
    this.emit({ tauPreview: render.renderTauPreview(tau, coverage) });
    return coverage;
  }

  async startMapping(method: 'nesy' | 'nns', tau?: number): Promise<JobState> {
    const job = await this.mutate(() => this.api.startMapping(method, tau));
    this.activeJob = job;
    this.activeJobMetrics = null;
    await this.refresh(); // phase flips to mapping; banner appears
    this.emit({ job: render.renderJobConsole(job) });
    return job;
  }

  async pollJob(): Promise<JobState> {
    if (!this.activeJob) throw new Error('no active mapping job');
    const job = await this.api.job(this.activeJob.job_id);
    this.activeJob = job;
    if (job.state === 'done' && !this.activeJobMetrics) {
      this.activeJobMetrics = await this.api.jobMetrics(job.job_id);
      await this.refresh(); // phase back to exploring
    }
    this.emit({ job: render.renderJobConsole(job, this.activeJobMetrics ?? undefined) });
    return job;
  }

  async waitForJob(pollMs = 50, timeoutMs = 120_000): Promise<JobState> {
    const deadline = Date.now() + timeoutMs;
    for (;;) {
      const job = await this.pollJob();
      if (job.state === 'done' || job.state === 'failed') return job;
      if (Date.now() > deadline) throw new Error('mapping job timed out');
      await new Promise((resolve) => setTimeout(resolve, pollMs));
    }
  }

  async commitMapping(): Promise<void> {
    if (!this.activeJob) throw new Error('no active mapping job');
    const jobId = this.activeJob.job_id;
    await this.mutate(() => this.api.commit(jobId));
    await this.refresh();
    await this.listThemes();
    const partitions = await this.api.partitions();
    this.emit({ partitions: render.renderPartitions(partitions) });
  }

  // ------------------------------------------------------------------
  // dashboards
  // ------------------------------------------------------------------

  async renderDashboards(options: { prevIteration?: number; nextIteration?: number } = {}): Promise<string> {
    const coverage = await this.api.coverage();
    const purity = await this.api.purity();
    const quartiles = await this.api.quartiles();
    const global = await this.api.globalState();
    const pieces = [
      render.renderCoverageGauge(coverage),
      render.renderPurityTable(purity),
      render.renderQuartileTable(quartiles),
      render.renderThemeDistribution(global),
      render.renderProjectionScatter(global),
    ];
    if (options.prevIteration !== undefined && options.nextIteration !== undefined) {
      const shift = await this.api.shift(options.prevIteration, options.nextIteration);
      pieces.push(
        render.renderHeatmap(
          shift,
          `Prediction shift, iteration ${options.prevIteration} to ${options.nextIteration}`,
          true,
        ),
      );
    }
    const html = pieces.join('\n');
    this.emit({ dashboards: html });
    return html;
  }

  async renderThemeExplanation(tid: string): Promise<string> {
    const explanation = await this.api.themeExplanation(tid);
    const html = [
      render.renderWordCloud(explanation),
      render.renderConceptHistograms(explanation),
    ].join('\n');
    this.emit({ dashboards: html });
    return html;
  }
}
