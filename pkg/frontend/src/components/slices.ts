/* Three linked slice panels (sagittal, coronal, axial) showing
 * server-rendered PNGs with client-drawn crosshairs and cluster
 * center-of-gravity markers on top. Images are displayed exactly as the
 * server oriented them; the overlay uses the inverse pixel mapping from
 * orientation.ts, so a click lands on the voxel under the cursor.
 *
 * Markers start gray and take a cluster's color only once the server
 * confirms the assignment; recoloring touches only that cluster's nodes.
 */

import type { Api, ClusterRow, SlicePayload, Triple } from '../api.js';
import { clear, el, pngDataUri, svgEl } from '../dom.js';
import { rgbCss } from '../format.js';
import { SLICE_NAMES, imageSize, pixelToVoxel, voxelToPixel } from '../orientation.js';
import { Latest, type StateStore } from '../state.js';

export interface SliceSource {
  layers: string[];
  fetch(axis: string, index: number, layer: string, scale: number): Promise<SlicePayload>;
}

export function testSliceSource(api: Api, testId: string, layers: string[]): SliceSource {
  return {
    layers,
    fetch: (axis, index, layer, scale) => api.getTestSlice(testId, axis, index, layer, scale),
  };
}

export function resultSliceSource(api: Api, resultId: string, layers: string[]): SliceSource {
  return {
    layers,
    fetch: (axis, index, layer, scale) => api.getResultSlice(resultId, axis, index, layer, scale),
  };
}

export interface SlicesOptions {
  onVoxelClick?: (voxel: Triple) => void;
  scale?: number;
}

const UNSELECTED_GRAY = 'rgb(153, 153, 153)';
/* markers appear while the slice is within this many voxels of the COG */
const MARKER_DEPTH = 2;

interface PanelParts {
  axis: number;
  image: HTMLImageElement;
  overlay: SVGSVGElement;
  slider: HTMLInputElement;
  caption: HTMLElement;
  markers: SVGGElement;
  crosshair: SVGGElement;
  gate: Latest;
  fetched: string;
}

export class SlicesPanel {
  private source: SliceSource | null = null;
  private layer = 'stat';
  private clusters: ClusterRow[] = [];
  private readonly scale: number;
  private readonly panels: PanelParts[] = [];
  private readonly layerSelect: HTMLSelectElement;
  private readonly markerNodes = new Map<string, SVGCircleElement[]>();

  constructor(
    container: HTMLElement,
    private readonly store: StateStore,
    private readonly options: SlicesOptions = {},
  ) {
    this.scale = options.scale ?? 4;
    this.layerSelect = el('select', { class: 'layer' });
    this.layerSelect.addEventListener('change', () => {
      this.layer = this.layerSelect.value;
      this.renderAll();
    });
    container.append(el('div', { class: 'slice-controls' }, [el('label', {}, ['layer ', this.layerSelect])]));

    const row = el('div', { class: 'slice-row' });
    for (let axis = 0; axis < 3; axis++) {
      const image = el('img', { class: 'slice-image', alt: `${SLICE_NAMES[axis]} slice` });
      const overlay = svgEl('svg', { class: 'slice-overlay' });
      const crosshair = svgEl('g', { class: 'crosshair' });
      const markers = svgEl('g', { class: 'markers' });
      overlay.append(crosshair, markers);
      const slider = el('input', { type: 'range', min: 0, max: 0, value: 0, class: 'slice-slider' });
      const caption = el('div', { class: 'slice-caption' });
      const panel: PanelParts = {
        axis,
        image,
        overlay,
        slider,
        caption,
        markers,
        crosshair,
        gate: new Latest(),
        fetched: '',
      };
      this.panels.push(panel);

      slider.addEventListener('input', () => {
        this.store.setSlice(axis, Number(slider.value));
      });
      overlay.addEventListener('click', (event) => this.handleClick(panel, event as MouseEvent));

      row.append(
        el('div', { class: 'slice-panel', 'data-axis': SLICE_NAMES[axis] }, [
          el('div', { class: 'slice-title' }, [SLICE_NAMES[axis]]),
          el('div', { class: 'slice-stack' }, [image, overlay]),
          slider,
          caption,
        ]),
      );
    }
    container.append(row);

    this.store.subscribe(() => this.renderAll());
  }

  setSource(source: SliceSource | null): void {
    this.source = source;
    this.clusters = [];
    this.markerNodes.clear();
    for (const panel of this.panels) {
      panel.fetched = '';
    }
    clear(this.layerSelect);
    if (source !== null) {
      for (const layer of source.layers) {
        this.layerSelect.append(el('option', { value: layer }, [layer]));
      }
      this.layer = source.layers[0];
      this.layerSelect.value = this.layer;
    }
    this.renderAll();
  }

  setClusters(clusters: ClusterRow[]): void {
    this.clusters = clusters;
    for (const panel of this.panels) {
      this.drawMarkers(panel);
    }
  }

  /* Recolors one cluster's markers in place; no other node is touched. */
  repaintCluster(clusterId: string, rgb: Triple): void {
    for (const node of this.markerNodes.get(clusterId) ?? []) {
      node.setAttribute('stroke', rgbCss(rgb));
    }
  }

  private handleClick(panel: PanelParts, event: MouseEvent): void {
    const state = this.store.current;
    const rect = panel.overlay.getBoundingClientRect();
    const voxel = pixelToVoxel(
      panel.axis,
      state.slice[panel.axis],
      event.clientX - rect.left,
      event.clientY - rect.top,
      state.dims,
      this.scale,
    );
    if (voxel !== null) {
      this.options.onVoxelClick?.(voxel);
    }
  }

  private renderAll(): void {
    for (const panel of this.panels) {
      void this.renderPanel(panel);
    }
  }

  private async renderPanel(panel: PanelParts): Promise<void> {
    const state = this.store.current;
    const index = state.slice[panel.axis];
    const { width, height } = imageSize(panel.axis, state.dims, this.scale);
    panel.overlay.setAttribute('width', String(width));
    panel.overlay.setAttribute('height', String(height));
    panel.slider.max = String(state.dims[panel.axis] - 1);
    panel.slider.value = String(index);
    this.drawCrosshair(panel);
    this.drawMarkers(panel);

    if (this.source === null) {
      panel.image.removeAttribute('src');
      panel.caption.textContent = '';
      panel.fetched = '';
      return;
    }
    const key = `${SLICE_NAMES[panel.axis]}:${index}:${this.layer}:${this.scale}`;
    if (key === panel.fetched) {
      return;
    }
    panel.fetched = key;
    let payload: SlicePayload | null;
    try {
      payload = await panel.gate.wrap(this.source.fetch(SLICE_NAMES[panel.axis], index, this.layer, this.scale));
    } catch (error) {
      panel.fetched = '';
      panel.caption.textContent = String(error);
      return;
    }
    if (payload === null) {
      return;
    }
    panel.image.src = pngDataUri(payload.png);
    panel.caption.textContent =
      `${payload.index + 1}/${payload.n_slices}  window [${payload.window[0].toPrecision(3)}, ` +
      `${payload.window[1].toPrecision(3)}]`;
  }

  private drawCrosshair(panel: PanelParts): void {
    const state = this.store.current;
    clear(panel.crosshair);
    const { width, height } = imageSize(panel.axis, state.dims, this.scale);
    const center = voxelToPixel(panel.axis, state.slice, state.dims, this.scale);
    panel.crosshair.append(
      svgEl('line', { x1: center.x, y1: 0, x2: center.x, y2: height, class: 'crosshair-v' }),
      svgEl('line', { x1: 0, y1: center.y, x2: width, y2: center.y, class: 'crosshair-h' }),
    );
  }

  private drawMarkers(panel: PanelParts): void {
    const state = this.store.current;
    clear(panel.markers);
    for (const [id, nodes] of this.markerNodes) {
      this.markerNodes.set(
        id,
        nodes.filter((n) => n.isConnected),
      );
    }
    const index = state.slice[panel.axis];
    for (const cluster of this.clusters) {
      if (Math.abs(cluster.cog_voxel[panel.axis] - index) > MARKER_DEPTH) {
        continue;
      }
      const rounded = cluster.cog_voxel.map((v) => Math.round(v)) as Triple;
      const at = voxelToPixel(panel.axis, rounded, state.dims, this.scale);
      const assigned = state.selectedClusters.get(cluster.id);
      const circle = svgEl('circle', {
        cx: at.x,
        cy: at.y,
        r: 3 * this.scale,
        fill: 'none',
        'stroke-width': 2,
        stroke: assigned ? rgbCss(assigned) : UNSELECTED_GRAY,
        'data-cluster': cluster.id,
      });
      const nodes = this.markerNodes.get(cluster.id) ?? [];
      nodes.push(circle);
      this.markerNodes.set(cluster.id, nodes);
      panel.markers.append(circle);
    }
  }
}
