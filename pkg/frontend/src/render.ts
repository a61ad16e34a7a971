// Pure renderers: API payload in, HTML string out. Display formatting
// only; every number shown is a value the service returned.

import type {
  CorpusStats,
  CoveragePayload,
  EvaluationPayload,
  ExplanationPayload,
  GlobalStatePayload,
  InstancePayload,
  JobMetrics,
  JobState,
  MatrixPayload,
  MembersPayload,
  PartitionsPayload,
  PurityPayload,
  QuartilesPayload,
  QueryHit,
  ThemePayload,
} from './types.js';

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;');
}

export const fmtPercent = (v: number): string => v.toFixed(1);
export const fmtScore = (v: number): string => v.toFixed(3);

function heatColor(v: number): string {
  // 0 -> white, 1 -> deep blue; values are already in [0, 1] or percent/100
  const clamped = Math.max(0, Math.min(1, v));
  const light = Math.round(97 - clamped * 55);
  return `hsl(214, 75%, ${light}%)`;
}

export function renderStats(stats: CorpusStats): string {
  return `<dl class="stats">
  <dt>Instances</dt><dd data-field="instance_count">${stats.instance_count}</dd>
  <dt>Assigned</dt><dd data-field="assigned_count">${stats.assigned_count}</dd>
  <dt>Unassigned</dt><dd data-field="unassigned_count">${stats.unassigned_count}</dd>
  <dt>Embedding dim</dt><dd data-field="embedding_dim">${stats.embedding_dim}</dd>
</dl>`;
}

export function renderLockoutBanner(phase: string): string {
  if (phase !== 'mapping') return '';
  return `<div class="banner lockout" role="alert">A mapping job is running.
Interventions are locked until it finishes.</div>`;
}

export function renderPartitions(payload: PartitionsPayload): string {
  const rows = payload.partitions
    .map(
      (p) => `<tr data-partition="${escapeHtml(p.partition_id)}"${p.is_noise ? ' class="noise"' : ''}>
  <td>${escapeHtml(p.partition_id)}</td>
  <td data-field="size">${p.size}</td>
  <td data-field="cohesion">${fmtScore(p.cohesion)}</td>
  <td>${p.is_noise ? 'noise' : ''}</td>
</tr>`,
    )
    .join('\n');
  const b = payload.balance;
  return `<table class="partitions">
<thead><tr><th>Partition</th><th>Size</th><th>Cohesion</th><th></th></tr></thead>
<tbody>
${rows}
</tbody>
</table>
<p class="balance">sizes ${b.min}&ndash;${b.max}, mean ${b.mean.toFixed(1)}</p>`;
}

export function renderInstanceRow(inst: InstancePayload): string {
  const concepts = Object.entries(inst.concepts)
    .map(([c, v]) => `<span class="concept" data-concept="${escapeHtml(c)}">${escapeHtml(c)}=${escapeHtml(v)}</span>`)
    .join(' ');
  const sim =
    inst.similarity === undefined
      ? ''
      : ` <span class="similarity" data-field="similarity">${fmtScore(inst.similarity)}</span>`;
  const assigned = inst.assignment.theme_id
    ? `<span class="assigned">${escapeHtml(inst.assignment.theme_id)}</span>`
    : '<span class="unassigned">unassigned</span>';
  return `<li class="instance" data-id="${escapeHtml(inst.id)}">
  <p>${escapeHtml(inst.text)}</p>
  ${concepts} ${assigned}${sim}
</li>`;
}

export function renderMemberList(payload: MembersPayload): string {
  const items = payload.members.map(renderInstanceRow).join('\n');
  return `<ol class="members" data-order="${escapeHtml(payload.order)}">
${items}
</ol>`;
}

export function renderQueryHits(hits: QueryHit[]): string {
  const items = hits
    .map(
      (h) => `<li data-id="${escapeHtml(h.id)}">
  <span class="similarity" data-field="similarity">${fmtScore(h.similarity)}</span>
  ${escapeHtml(h.text)}
</li>`,
    )
    .join('\n');
  return `<ol class="hits">
${items}
</ol>`;
}

export function renderThemeCard(theme: ThemePayload): string {
  const good = theme.good
    .map((e) => `<li class="good" data-key="${escapeHtml(e.key)}">${escapeHtml(e.key)}</li>`)
    .join('');
  const bad = theme.bad
    .map((e) => `<li class="bad" data-key="${escapeHtml(e.key)}">${escapeHtml(e.key)}</li>`)
    .join('');
  const phrases = theme.phrases
    .map((p) => `<li class="phrase">${escapeHtml(p)}</li>`)
    .join('');
  return `<article class="theme" data-theme="${escapeHtml(theme.theme_id)}">
  <h3>${escapeHtml(theme.name)}</h3>
  <p><span data-field="mapped_count">${theme.mapped_count}</span> mapped ·
     created iteration ${theme.created_iteration}${theme.scoreable ? '' : ' · <em>unscoreable</em>'}</p>
  <ul class="exemplars">${good}${bad}</ul>
  <ul class="phrases">${phrases}</ul>
</article>`;
}

export function renderThemeList(themes: ThemePayload[]): string {
  return `<section class="themes">
${themes.map(renderThemeCard).join('\n')}
</section>`;
}

export function renderJobConsole(job: JobState, metrics?: JobMetrics): string {
  const pct = Math.round(job.progress * 100);
  const counts = job.counts
    ? `<p>mapped <span data-field="mapped">${job.counts.mapped}</span> of ${job.counts.total}</p>`
    : '';
  const quality = metrics
    ? `<p>coverage <span data-field="coverage">${fmtPercent(metrics.coverage)}</span>%,
average purity <span data-field="average_purity">${fmtPercent(metrics.average_purity)}</span>%</p>`
    : '';
  return `<div class="job" data-job="${escapeHtml(job.job_id)}" data-state="${job.state}">
  <progress max="100" value="${pct}"></progress> <span>${pct}%</span>
  <p>${escapeHtml(job.method)} · ${escapeHtml(job.state)}</p>
  ${counts}${quality}
</div>`;
}

export function renderTauPreview(tau: number, coverage: number): string {
  return `<label class="tau-preview">&tau; = <span data-field="tau">${tau.toFixed(2)}</span>
 &rarr; coverage <span data-field="coverage">${fmtPercent(coverage)}</span>%</label>`;
}

export function renderCoverageGauge(payload: CoveragePayload): string {
  return `<figure class="gauge" data-iteration="${payload.iteration}">
  <figcaption>Coverage (iteration ${payload.iteration}, ${escapeHtml(payload.method)})</figcaption>
  <div class="bar"><div class="fill" style="width:${fmtPercent(payload.coverage)}%"></div></div>
  <strong data-field="coverage">${fmtPercent(payload.coverage)}</strong>%
  (<span data-field="mapped">${payload.counts.mapped}</span> of ${payload.counts.total})
</figure>`;
}

export function renderPurityTable(payload: PurityPayload): string {
  const rows = Object.entries(payload.per_concept)
    .map(
      ([concept, value]) => `<tr data-concept="${escapeHtml(concept)}">
  <td>${escapeHtml(concept)}</td><td data-field="purity">${value.toFixed(2)}</td>
</tr>`,
    )
    .join('\n');
  return `<table class="purity">
<thead><tr><th>Concept</th><th>Purity %</th></tr></thead>
<tbody>
${rows}
</tbody>
<tfoot><tr><td>average</td><td data-field="average_purity">${payload.average_purity.toFixed(2)}</td></tr></tfoot>
</table>`;
}

export function renderQuartileTable(payload: QuartilesPayload): string {
  const cells = (['Q1', 'Q2', 'Q3', 'All'] as const)
    .map((q) => `<td data-slice="${q}">${payload.sizes[q]}</td>`)
    .join('');
  return `<table class="quartiles" data-iteration="${payload.iteration}">
<thead><tr><th>&le;Q1</th><th>&le;Q2</th><th>&le;Q3</th><th>All</th></tr></thead>
<tbody><tr>${cells}</tr></tbody>
</table>`;
}

export function renderSliceF1Table(payload: EvaluationPayload): string {
  const rows = (['Q1', 'Q2', 'Q3', 'All'] as const)
    .map(
      (q) => `<tr data-slice="${q}">
  <td>&le;${q}</td>
  <td data-field="f1">${payload.f1_by_slice[q].toFixed(2)}</td>
  <td data-field="judged">${payload.judged_by_slice[q]}</td>
</tr>`,
    )
    .join('\n');
  return `<table class="slice-f1" data-average="${escapeHtml(payload.average)}">
<thead><tr><th>Slice</th><th>F1</th><th>Judged</th></tr></thead>
<tbody>
${rows}
</tbody>
</table>`;
}

export function renderHeatmap(payload: MatrixPayload, title: string, percent = false): string {
  const header = payload.cols.map((c) => `<th>${escapeHtml(c)}</th>`).join('');
  const body = payload.rows
    .map((rowLabel, i) => {
      const cells = payload.values[i]
        .map((v, j) => {
          const shade = percent ? v / 100 : v;
          return `<td class="cell" data-row="${escapeHtml(rowLabel)}" data-col="${escapeHtml(
            payload.cols[j],
          )}" data-value="${v}" style="background:${heatColor(shade)}">${v.toFixed(
            percent ? 1 : 3,
          )}</td>`;
        })
        .join('');
      return `<tr><th>${escapeHtml(rowLabel)}</th>${cells}</tr>`;
    })
    .join('\n');
  return `<figure class="heatmap">
  <figcaption>${escapeHtml(title)}</figcaption>
  <table>
  <thead><tr><th></th>${header}</tr></thead>
  <tbody>
${body}
  </tbody>
  </table>
</figure>`;
}

export function renderWordCloud(payload: ExplanationPayload): string {
  const max = payload.tokens.length ? payload.tokens[0].count : 1;
  const spans = payload.tokens
    .map((t) => {
      const size = 0.8 + 1.6 * (t.count / max);
      return `<span class="token" data-count="${t.count}" style="font-size:${size.toFixed(
        2,
      )}em">${escapeHtml(t.token)}</span>`;
    })
    .join(' ');
  return `<div class="wordcloud" data-theme="${escapeHtml(payload.theme_id)}">${spans}</div>`;
}

export function renderConceptHistograms(payload: ExplanationPayload): string {
  const blocks = Object.entries(payload.concept_histograms)
    .map(([concept, hist]) => {
      const bars = Object.entries(hist)
        .map(
          ([value, cell]) => `<div class="bar-row" data-value="${escapeHtml(value)}">
  <span class="label">${escapeHtml(value)}</span>
  <div class="bar" style="width:${fmtPercent(cell.percent)}%"></div>
  <span data-field="percent">${fmtPercent(cell.percent)}</span>%
  (<span data-field="count">${cell.count}</span>)
</div>`,
        )
        .join('\n');
      return `<div class="histogram" data-concept="${escapeHtml(concept)}">
<h4>${escapeHtml(concept)}</h4>
${bars}
</div>`;
    })
    .join('\n');
  return `<section class="concept-histograms">
${blocks}
</section>`;
}

export function renderThemeDistribution(payload: GlobalStatePayload): string {
  const rows = Object.entries(payload.distribution)
    .map(
      ([label, cell]) => `<tr data-label="${escapeHtml(label)}">
  <td>${escapeHtml(label)}</td>
  <td data-field="count">${cell.count}</td>
  <td data-field="percent">${fmtPercent(cell.percent)}</td>
</tr>`,
    )
    .join('\n');
  return `<table class="distribution">
<thead><tr><th>Theme</th><th>Count</th><th>%</th></tr></thead>
<tbody>
${rows}
</tbody>
</table>`;
}

export function renderProjectionScatter(payload: GlobalStatePayload, size = 480): string {
  const coords = payload.projection.coords;
  if (!coords.length) return `<svg class="scatter" width="${size}" height="${size}"></svg>`;
  const xs = coords.map((c) => c[0]);
  const ys = coords.map((c) => c[1]);
  const minX = Math.min(...xs);
  const maxX = Math.max(...xs);
  const minY = Math.min(...ys);
  const maxY = Math.max(...ys);
  const spanX = maxX - minX || 1;
  const spanY = maxY - minY || 1;
  const points = coords
    .map((c, i) => {
      const x = (8 + ((c[0] - minX) / spanX) * (size - 16)).toFixed(1);
      const y = (8 + ((c[1] - minY) / spanY) * (size - 16)).toFixed(1);
      return `<circle cx="${x}" cy="${y}" r="2" data-id="${escapeHtml(payload.projection.ids[i])}"/>`;
    })
    .join('');
  return `<svg class="scatter" width="${size}" height="${size}" viewBox="0 0 ${size} ${size}">${points}</svg>`;
}

export function renderErrorBanner(code: string, message: string): string {
  return `<div class="banner error" data-code="${escapeHtml(code)}">${escapeHtml(
    code,
  )}: ${escapeHtml(message)}</div>`;
}
