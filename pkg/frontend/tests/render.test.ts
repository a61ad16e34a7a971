// Recorded-fixture replay: every number a dashboard renders must equal the
// API payload value (at display precision). No client-side recomputation.

import { readFileSync } from 'node:fs';
import { dirname, join } from 'node:path';
import { fileURLToPath } from 'node:url';
import { describe, expect, it } from 'vitest';

import * as render from '../src/render.js';
import type {
  CorpusStats,
  CoveragePayload,
  EvaluationPayload,
  ExplanationPayload,
  GlobalStatePayload,
  JobMetrics,
  JobState,
  MatrixPayload,
  MembersPayload,
  PartitionsPayload,
  PurityPayload,
  QuartilesPayload,
  QueryHit,
  ThemePayload,
} from '../src/types.js';

const here = dirname(fileURLToPath(import.meta.url));

function fixture<T>(name: string): T {
  return JSON.parse(readFileSync(join(here, 'fixtures', `${name}.json`), 'utf-8')) as T;
}

describe('stats and partitions', () => {
  it('renders corpus stats verbatim', () => {
    const stats = fixture<CorpusStats>('stats');
    const html = render.renderStats(stats);
    expect(html).toContain(`>${stats.instance_count}</dd>`);
    expect(html).toContain(`>${stats.assigned_count}</dd>`);
    expect(html).toContain(`>${stats.unassigned_count}</dd>`);
  });

  it('renders every partition row with payload size and cohesion', () => {
    const payload = fixture<PartitionsPayload>('partitions');
    const html = render.renderPartitions(payload);
    for (const p of payload.partitions) {
      expect(html).toContain(`data-partition="${p.partition_id}"`);
      expect(html).toContain(`<td data-field="size">${p.size}</td>`);
      expect(html).toContain(`<td data-field="cohesion">${p.cohesion.toFixed(3)}</td>`);
    }
  });

  it('renders ranked members with similarity from the payload', () => {
    const payload = fixture<MembersPayload>('members');
    const html = render.renderMemberList(payload);
    for (const m of payload.members) {
      expect(html).toContain(`data-id="${m.id}"`);
    }
    expect(html).toContain(`data-order="${payload.order}"`);
  });

  it('renders query hits in payload order with payload similarities', () => {
    const { hits } = fixture<{ hits: QueryHit[] }>('hits');
    const html = render.renderQueryHits(hits);
    let cursor = -1;
    for (const hit of hits) {
      const at = html.indexOf(`data-id="${hit.id}"`);
      expect(at).toBeGreaterThan(cursor);
      cursor = at;
      expect(html).toContain(hit.similarity.toFixed(3));
    }
  });
});

describe('themes', () => {
  it('renders exemplars, phrases, and mapped counts from the payload', () => {
    const { themes } = fixture<{ themes: ThemePayload[] }>('themes');
    const html = render.renderThemeList(themes);
    for (const theme of themes) {
      expect(html).toContain(`data-theme="${theme.theme_id}"`);
      expect(html).toContain(`<h3>${theme.name}</h3>`);
      expect(html).toContain(`<span data-field="mapped_count">${theme.mapped_count}</span>`);
      for (const e of theme.good) expect(html).toContain(`class="good" data-key="${e.key}"`);
      for (const e of theme.bad) expect(html).toContain(`class="bad" data-key="${e.key}"`);
      for (const p of theme.phrases) expect(html).toContain(`<li class="phrase">${p}</li>`);
    }
  });
});

describe('mapping console', () => {
  it('renders job progress and pre-commit metrics verbatim', () => {
    const job = fixture<JobState>('job');
    const metrics = fixture<JobMetrics>('job_metrics');
    const html = render.renderJobConsole(job, metrics);
    expect(html).toContain(`data-job="${job.job_id}"`);
    expect(html).toContain(`data-state="${job.state}"`);
    expect(html).toContain(`${metrics.coverage.toFixed(1)}`);
    expect(html).toContain(`${metrics.average_purity.toFixed(1)}`);
  });

  it('renders the tau preview from the payload coverage', () => {
    const preview = fixture<{ tau: number; coverage: number }>('preview');
    const html = render.renderTauPreview(preview.tau, preview.coverage);
    expect(html).toContain(preview.coverage.toFixed(1));
    expect(html).toContain(preview.tau.toFixed(2));
  });

  it('shows the lockout banner only in the mapping phase', () => {
    expect(render.renderLockoutBanner('mapping')).toContain('lockout');
    expect(render.renderLockoutBanner('exploring')).toBe('');
  });
});

describe('dashboards', () => {
  it('coverage gauge shows the payload coverage', () => {
    const payload = fixture<CoveragePayload>('coverage');
    const html = render.renderCoverageGauge(payload);
    expect(html).toContain(`<strong data-field="coverage">${payload.coverage.toFixed(1)}</strong>`);
    expect(html).toContain(`<span data-field="mapped">${payload.counts.mapped}</span>`);
  });

  it('purity table lists every concept with the payload value', () => {
    const payload = fixture<PurityPayload>('purity');
    const html = render.renderPurityTable(payload);
    for (const [concept, value] of Object.entries(payload.per_concept)) {
      expect(html).toContain(`data-concept="${concept}"`);
      expect(html).toContain(`<td data-field="purity">${value.toFixed(2)}</td>`);
    }
    expect(html).toContain(payload.average_purity.toFixed(2));
  });

  it('quartile table shows the payload slice sizes', () => {
    const payload = fixture<QuartilesPayload>('quartiles');
    const html = render.renderQuartileTable(payload);
    for (const q of ['Q1', 'Q2', 'Q3', 'All'] as const) {
      expect(html).toContain(`<td data-slice="${q}">${payload.sizes[q]}</td>`);
    }
  });

  it('slice F1 table shows every slice value from the payload', () => {
    const payload = fixture<EvaluationPayload>('evaluation');
    const html = render.renderSliceF1Table(payload);
    for (const q of ['Q1', 'Q2', 'Q3', 'All'] as const) {
      expect(html).toContain(`<td data-field="f1">${payload.f1_by_slice[q].toFixed(2)}</td>`);
      expect(html).toContain(`<td data-field="judged">${payload.judged_by_slice[q]}</td>`);
    }
  });

  it('heatmap cells carry the exact payload value', () => {
    for (const [name, percent] of [
      ['overlap', false],
      ['shift', true],
    ] as const) {
      const payload = fixture<MatrixPayload>(name);
      const html = render.renderHeatmap(payload, name, percent);
      payload.rows.forEach((row, i) => {
        payload.cols.forEach((col, j) => {
          const value = payload.values[i][j];
          expect(html).toContain(
            `data-row="${row}" data-col="${col}" data-value="${value}"`,
          );
          expect(html).toContain(`>${value.toFixed(percent ? 1 : 3)}</td>`);
        });
      });
    }
  });

  it('word cloud and histograms render the payload counts', () => {
    const payload = fixture<ExplanationPayload>('explanation');
    const cloud = render.renderWordCloud(payload);
    for (const t of payload.tokens) {
      expect(cloud).toContain(`data-count="${t.count}"`);
      expect(cloud).toContain(`>${t.token}</span>`);
    }
    const hist = render.renderConceptHistograms(payload);
    for (const [concept, values] of Object.entries(payload.concept_histograms)) {
      expect(hist).toContain(`data-concept="${concept}"`);
      for (const [value, cell] of Object.entries(values)) {
        expect(hist).toContain(`data-value="${value}"`);
        expect(hist).toContain(`<span data-field="percent">${cell.percent.toFixed(1)}</span>`);
        expect(hist).toContain(`<span data-field="count">${cell.count}</span>`);
      }
    }
  });

  it('theme distribution and scatter render from the payload', () => {
    const payload = fixture<GlobalStatePayload>('global');
    const html = render.renderThemeDistribution(payload);
    for (const [label, cell] of Object.entries(payload.distribution)) {
      expect(html).toContain(`data-label="${label}"`);
      expect(html).toContain(`<td data-field="count">${cell.count}</td>`);
      expect(html).toContain(`<td data-field="percent">${cell.percent.toFixed(1)}</td>`);
    }
    const svg = render.renderProjectionScatter(payload);
    expect(svg.match(/<circle/g)?.length ?? 0).toBe(payload.projection.coords.length);
    for (const id of payload.projection.ids.slice(0, 5)) {
      expect(svg).toContain(`data-id="${id}"`);
    }
  });

  it('escapes markup in text fields', () => {
    const html = render.renderQueryHits([
      { id: 'x', similarity: 0.5, text: '<script>alert(1)</script>' },
    ]);
    expect(html).not.toContain('<script>');
    expect(html).toContain('&lt;script&gt;');
  });
});
