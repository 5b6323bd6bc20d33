/* Composition root: builds every panel into the page and wires the
 * cross-panel flows. All statistics live on the server; this layer only
 * routes ids, payloads, and view state between panels.
 */

import type { Api, ClusterRow, StudyCard, TestCard, Triple } from './api.js';
import { el } from './dom.js';
import { StateStore } from './state.js';
import { ClustersPanel } from './components/clusters.js';
import { GlyphsPanel } from './components/glyphs.js';
import { HypothesisPanel } from './components/hypothesis.js';
import { JobsPanel } from './components/jobs.js';
import { OverlayPanel } from './components/overlay.js';
import { SlicesPanel, resultSliceSource, testSliceSource } from './components/slices.js';
import { SplomPanel } from './components/splom.js';
import { StudyPanel } from './components/study.js';
import { ThresholdPanel } from './components/threshold.js';
import { TractsPanel } from './components/tracts.js';

export class App {
  readonly store = new StateStore();
  readonly study: StudyPanel;
  readonly hypothesis: HypothesisPanel;
  readonly slices: SlicesPanel;
  readonly threshold: ThresholdPanel;
  readonly clusters: ClustersPanel;
  readonly splom: SplomPanel;
  readonly glyphs: GlyphsPanel;
  readonly tracts: TractsPanel;
  readonly overlay: OverlayPanel;
  readonly jobs: JobsPanel;

  private studyCard: StudyCard | null = null;
  private testCard: TestCard | null = null;

  constructor(root: HTMLElement, private readonly api: Api) {
    const section = (name: string): HTMLElement => {
      const box = el('section', { class: `panel ${name}` });
      root.append(box);
      return box;
    };

    this.study = new StudyPanel(section('study'), api, { onStudy: (card) => this.handleStudy(card) });
    this.hypothesis = new HypothesisPanel(section('hypothesis'), api, { onTest: (card) => this.handleTest(card) });
    this.slices = new SlicesPanel(section('slices'), this.store, {
      onVoxelClick: (voxel) => void this.handleVoxel(voxel),
    });
    this.threshold = new ThresholdPanel(section('threshold'), api, this.store, {
      onThreshold: (payload) => {
        this.clusters.setPayload(payload);
        this.slices.setClusters(payload.clusters);
        this.overlay.offerMask(payload.mask_id, `${payload.surface} >= ${payload.threshold.toPrecision(3)}`);
      },
    });
    this.clusters = new ClustersPanel(section('clusters'), api, this.store, {
      onRowClick: (cluster) => this.recenter(cluster),
      onColored: (clusterId, rgb) => this.slices.repaintCluster(clusterId, rgb),
      onSplom: (clusterId) => void this.showClusterSplom(clusterId),
      onTracts: (maskId) => void this.showTracts(maskId),
    });
    this.splom = new SplomPanel(section('splom'));
    this.glyphs = new GlyphsPanel(section('glyphs'));
    this.tracts = new TractsPanel(section('tracts'), api, this.store, {
      fetchSlice: (axis, index) => {
        if (this.testCard === null) {
          return Promise.reject(new Error('no test yet'));
        }
        return api.getTestSlice(this.testCard.id, axis, index, 'stat', 1);
      },
    });
    this.overlay = new OverlayPanel(section('overlay'), api, this.store);
    this.jobs = new JobsPanel(section('jobs'), api, {
      config: () => {
        const config = this.hypothesis.config();
        return { axes: config.axes, use_tfce: config.use_tfce, smoothing_sigma: config.smoothing_sigma };
      },
      onResult: (result) => {
        this.slices.setSource(resultSliceSource(this.api, result.id, result.layers));
      },
    });
  }

  private handleStudy(card: StudyCard): void {
    this.studyCard = card;
    this.testCard = null;
    this.store.setStudy(card.id, card.dims);
    this.hypothesis.setStudy(card.id, card.axes);
    this.jobs.setStudy(card.id);
    this.tracts.setSpacing(card.spacing_mm);
    this.slices.setSource(null);
  }

  private handleTest(card: TestCard): void {
    this.testCard = card;
    this.store.setTest(card.id);
    this.slices.setSource(testSliceSource(this.api, card.id, card.layers));
    void this.threshold.setTest(card.id);
  }

  private recenter(cluster: ClusterRow): void {
    this.store.recenter(cluster.cog_voxel);
  }

  private async handleVoxel(voxel: Triple): Promise<void> {
    if (this.studyCard === null) return;
    this.store.setSplomTarget({ kind: 'voxel', voxel });
    const smoothing = this.testCard?.smoothing_sigma ?? 0;
    const [splom, glyphs] = await Promise.all([
      this.api.getVoxelSplom(this.studyCard.id, voxel, smoothing),
      this.api.getVoxelGlyphs(this.studyCard.id, voxel),
    ]);
    this.splom.render(splom, this.studyCard.group_names);
    this.glyphs.render(glyphs);
  }

  private async showClusterSplom(clusterId: string): Promise<void> {
    if (this.studyCard === null) return;
    this.store.setSplomTarget({ kind: 'cluster', clusterId });
    const payload = await this.api.getClusterSplom(clusterId);
    this.splom.render(payload, this.studyCard.group_names);
  }

  private async showTracts(maskId: string): Promise<void> {
    if (this.studyCard === null) return;
    const card = await this.api.postTracto(this.studyCard.id, maskId, {});
    await this.tracts.show(card);
  }
}
