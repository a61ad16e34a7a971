// Browser wiring: binds the workbench controller to the static layout in
// index.html. All state changes flow through Workbench's render sink.

import { ApiClient } from './api.js';
import { Workbench } from './workbench.js';
import type { Screen } from './workbench.js';

function byId(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing #${id}`);
  return el;
}

function paint(screen: Screen): void {
  byId('banner').innerHTML = screen.banner + screen.error;
  byId('stats').innerHTML = screen.stats;
  byId('partitions').innerHTML = screen.partitions;
  byId('members').innerHTML = screen.members;
  byId('hits').innerHTML = screen.hits;
  byId('themes').innerHTML = screen.themes;
  byId('job').innerHTML = screen.job;
  byId('tau-preview').innerHTML = screen.tauPreview;
  byId('dashboards').innerHTML = screen.dashboards;
  const locked = screen.banner.includes('lockout');
  document
    .querySelectorAll<HTMLButtonElement>('button[data-intervention]')
    .forEach((b) => (b.disabled = locked));
}

function formValue(id: string): string {
  return (byId(id) as HTMLInputElement).value.trim();
}

export function boot(baseUrl: string = window.location.origin): Workbench {
  const bench = new Workbench(new ApiClient(baseUrl), paint);

  byId('run-kmeans').addEventListener('click', () =>
    bench.findPartitions('kmeans', { k: Number(formValue('kmeans-k')) || undefined }),
  );
  byId('run-density').addEventListener('click', () => bench.findPartitions('density'));
  byId('run-query').addEventListener('click', () => bench.textQuery(formValue('query-text')));
  byId('create-theme').addEventListener('click', () => bench.createTheme(formValue('theme-name')));
  byId('start-mapping').addEventListener('click', async () => {
    await bench.startMapping(
      (formValue('mapping-method') as 'nesy' | 'nns') || 'nesy',
      Number(formValue('mapping-tau')) || undefined,
    );
    await bench.waitForJob(500);
  });
  byId('commit-mapping').addEventListener('click', () => bench.commitMapping());
  byId('tau-slider').addEventListener('change', (ev) => {
    bench.previewTau(Number((ev.target as HTMLInputElement).value));
  });
  byId('refresh-dashboards').addEventListener('click', () => bench.renderDashboards());

  document.addEventListener('click', (ev) => {
    const target = ev.target as HTMLElement;
    const partitionRow = target.closest<HTMLElement>('[data-partition]');
    if (partitionRow) {
      bench.openPartition(partitionRow.dataset.partition!, 'closest-first');
    }
    const instance = target.closest<HTMLElement>('.instance[data-id]');
    if (instance && target.classList.contains('similar')) {
      bench.similarInstances(instance.dataset.id!);
    }
  });

  void bench.refresh().then(() => bench.listThemes());
  return bench;
}

declare global {
  interface Window {
    workbench?: Workbench;
  }
}

if (typeof document !== 'undefined' && document.getElementById('banner')) {
  window.workbench = boot();
}
