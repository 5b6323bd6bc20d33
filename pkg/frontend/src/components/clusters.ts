/* Cluster table: one row per connected component above the threshold.
 * Clicking a row recenters the slice views on the server's COG for that
 * cluster; the color input posts an assignment and repaints only the
 * affected row once the server echoes the stored color back.
 */

import type { Api, ClusterRow, ThresholdPayload, Triple } from '../api.js';
import { clear, el } from '../dom.js';
import { rgbCss } from '../format.js';
import type { StateStore } from '../state.js';

const UNSELECTED_GRAY: Triple = [153, 153, 153];

export interface ClustersOptions {
  onRowClick: (cluster: ClusterRow) => void;
  onColored?: (clusterId: string, rgb: Triple) => void;
  onSplom?: (clusterId: string) => void;
  onTracts?: (maskId: string) => void;
}

export class ClustersPanel {
  private payload: ThresholdPayload | null = null;
  private readonly table: HTMLTableElement;
  private readonly summary: HTMLElement;
  private readonly swatches = new Map<string, HTMLElement>();

  constructor(
    container: HTMLElement,
    private readonly api: Api,
    private readonly store: StateStore,
    private readonly options: ClustersOptions,
  ) {
    this.summary = el('div', { class: 'cluster-summary' });
    this.table = el('table', { class: 'cluster-table' });
    const actions = el('div', { class: 'cluster-actions' });
    const tractButton = el('button', { class: 'tracts' }, ['track mask']);
    tractButton.addEventListener('click', () => {
      if (this.payload !== null) {
        this.options.onTracts?.(this.payload.mask_id);
      }
    });
    actions.append(tractButton);
    container.append(el('h3', {}, ['clusters']), this.summary, this.table, actions);
  }

  get maskId(): string | null {
    return this.payload?.mask_id ?? null;
  }

  setPayload(payload: ThresholdPayload): void {
    this.payload = payload;
    this.swatches.clear();
    clear(this.table);
    this.summary.textContent =
      `${payload.clusters.length} clusters, ${payload.n_voxels} voxels at ` +
      `${payload.surface} >= ${payload.threshold.toPrecision(4)}`;
    if (payload.clusters.length === 0) {
      return;
    }
    const head = el('tr', {}, []);
    for (const title of ['cluster', 'voxels', 'volume (mm³)', 'COG (mm)', 'peak', 'color', '']) {
      head.append(el('th', {}, [title]));
    }
    this.table.append(head);
    for (const cluster of payload.clusters) {
      this.table.append(this.buildRow(cluster));
    }
  }

  private buildRow(cluster: ClusterRow): HTMLTableRowElement {
    const assigned = this.store.current.selectedClusters.get(cluster.id) ?? cluster.color;
    const swatch = el('span', { class: 'swatch' });
    swatch.style.background = rgbCss(assigned ?? UNSELECTED_GRAY);
    this.swatches.set(cluster.id, swatch);

    const picker = el('input', { type: 'color', value: '#e41a1c', 'data-cluster': cluster.id });
    picker.addEventListener('click', (event) => event.stopPropagation());
    picker.addEventListener('change', () => void this.assignColor(cluster.id, picker.value));

    const splomButton = el('button', { class: 'cluster-splom' }, ['splom']);
    splomButton.addEventListener('click', (event) => {
      event.stopPropagation();
      this.options.onSplom?.(cluster.id);
    });

    const cog = cluster.cog_mm.map((v) => v.toFixed(1)).join(', ');
    const row = el('tr', { class: 'cluster-row', 'data-cluster': cluster.id }, [
      el('td', {}, [cluster.id]),
      el('td', {}, [String(cluster.voxels)]),
      el('td', {}, [cluster.volume_mm3.toFixed(1)]),
      el('td', {}, [cog]),
      el('td', {}, [cluster.peak_stat.toPrecision(4)]),
      el('td', {}, [swatch, picker]),
      el('td', {}, [splomButton]),
    ]);
    row.addEventListener('click', () => this.options.onRowClick(cluster));
    return row;
  }

  private async assignColor(clusterId: string, hex: string): Promise<void> {
    const echoed = await this.api.postClusterColor(clusterId, hex);
    this.store.setClusterColor(clusterId, echoed.rgb);
    const swatch = this.swatches.get(clusterId);
    if (swatch) {
      swatch.style.background = rgbCss(echoed.rgb);
    }
    this.options.onColored?.(clusterId, echoed.rgb);
  }
}
