import { describe, expect, it } from 'vitest';

import type { SlicePayload, ThresholdPayload, Triple } from '../src/api.js';
import { SlicesPanel, testSliceSource, type SliceSource } from '../src/components/slices.js';
import { StateStore } from '../src/state.js';
import { DIMS, FakeApi } from './fake_api.js';
import { decodeMarker, deferred, flush, mount, mouse, q, qa, setValue } from './helpers.js';

async function build(options: { onVoxelClick?: (voxel: Triple) => void } = {}) {
  const container = mount();
  const fake = new FakeApi();
  const store = new StateStore();
  const panel = new SlicesPanel(container, store, { ...options, scale: 4 });
  store.setStudy('study-1', DIMS);
  panel.setSource(testSliceSource(fake, 'test-1', ['stat', 'p']));
  await flush();
  return { container, fake, store, panel };
}

async function thresholdPayload(fake: FakeApi): Promise<ThresholdPayload> {
  return fake.postThreshold('test-1', 3, 26);
}

describe('SlicesPanel', () => {
  it('renders all three planes from server-rendered PNGs, unmodified', async () => {
    const { container } = await build();
    const images = qa<HTMLImageElement>(container, 'img.slice-image');
    expect(images.length).toBe(3);
    /* the study grid is 10 x 12 x 8, so the mid cursor is (5, 6, 4) */
    expect(decodeMarker(images[0].src)).toBe('test:test-1:sagittal:5:stat:4');
    expect(decodeMarker(images[1].src)).toBe('test:test-1:coronal:6:stat:4');
    expect(decodeMarker(images[2].src)).toBe('test:test-1:axial:4:stat:4');
  });

  it('captions each panel with the server position and window', async () => {
    const { container } = await build();
    const caption = q(container, '[data-axis=sagittal] .slice-caption');
    expect(caption.textContent).toBe('6/10  window [-4.00, 4.00]');
  });

  it('moves only the touched plane when its slider changes', async () => {
    const { container, fake, store } = await build();
    const before = fake.count('getTestSlice');
    setValue(q<HTMLInputElement>(container, '[data-axis=sagittal] input.slice-slider'), '7');
    await flush();
    expect(store.current.slice).toEqual([7, 6, 4]);
    expect(fake.count('getTestSlice')).toBe(before + 1);
    expect(decodeMarker(q<HTMLImageElement>(container, '[data-axis=sagittal] img').src)).toBe(
      'test:test-1:sagittal:7:stat:4',
    );
  });

  it('does not refetch unchanged slices on unrelated state churn', async () => {
    const { fake, store } = await build();
    const before = fake.count('getTestSlice');
    store.setSplomTarget({ kind: 'voxel', voxel: [1, 1, 1] });
    await flush();
    expect(fake.count('getTestSlice')).toBe(before);
  });

  it('refetches every plane when the layer changes', async () => {
    const { container, fake } = await build();
    const before = fake.count('getTestSlice');
    setValue(q<HTMLSelectElement>(container, 'select.layer'), 'p');
    await flush();
    expect(fake.count('getTestSlice')).toBe(before + 3);
    expect(decodeMarker(q<HTMLImageElement>(container, '[data-axis=axial] img').src)).toBe(
      'test:test-1:axial:4:p:4',
    );
  });

  it('recentering the store lands the crosshair on the voxel center', async () => {
    const { container, store } = await build();
    store.recenter([4.4, 6.6, 3.2]);
    await flush();
    expect(store.current.slice).toEqual([4, 7, 3]);
    /* axial plane: columns span i reversed, rows span j reversed */
    const vertical = q(container, '[data-axis=axial] .crosshair line.crosshair-v');
    const horizontal = q(container, '[data-axis=axial] .crosshair line.crosshair-h');
    expect(vertical.getAttribute('x1')).toBe(String((10 - 1 - 4 + 0.5) * 4));
    expect(horizontal.getAttribute('y1')).toBe(String((12 - 1 - 7 + 0.5) * 4));
    const slider = q<HTMLInputElement>(container, '[data-axis=axial] input.slice-slider');
    expect(slider.value).toBe('3');
  });

  it('reports clicks as grid voxels under the radiological flip', async () => {
    const clicks: Triple[] = [];
    const { container } = await build({ onVoxelClick: (v) => clicks.push(v) });
    /* jsdom rects sit at the origin, so client coords are image pixels */
    mouse(q(container, '[data-axis=axial] svg.slice-overlay'), 'click', 1, 1);
    expect(clicks).toEqual([[9, 11, 4]]);
    mouse(q(container, '[data-axis=axial] svg.slice-overlay'), 'click', 39, 47);
    expect(clicks[1]).toEqual([0, 0, 4]);
  });

  it('ignores clicks outside the slice image', async () => {
    const clicks: Triple[] = [];
    const { container } = await build({ onVoxelClick: (v) => clicks.push(v) });
    mouse(q(container, '[data-axis=axial] svg.slice-overlay'), 'click', 500, 1);
    expect(clicks.length).toBe(0);
  });

  it('marks cluster centers only on planes within the marker depth', async () => {
    const { container, fake, panel } = await build();
    panel.setClusters((await thresholdPayload(fake)).clusters);
    /* cursor (5, 6, 4): cluster-1 COG (4.4, 6.6, 3.2) is near all three
     * planes; cluster-2 (8.1, 2.2, 5.0) only near the axial one */
    expect(qa(container, '[data-axis=sagittal] .markers circle').length).toBe(1);
    expect(qa(container, '[data-axis=coronal] .markers circle').length).toBe(1);
    expect(qa(container, '[data-axis=axial] .markers circle').length).toBe(2);
    const markers = qa(container, '.markers circle');
    expect(markers.every((m) => m.getAttribute('stroke') === 'rgb(153, 153, 153)')).toBe(true);
  });

  it('repaints exactly the recolored cluster, leaving other nodes untouched', async () => {
    const { container, fake, panel, store } = await build();
    const payload = await thresholdPayload(fake);
    panel.setClusters(payload.clusters);
    const first = payload.clusters[0].id;
    const second = payload.clusters[1].id;
    const firstNodes = qa(container, `.markers circle[data-cluster="${first}"]`);
    const secondNodes = qa(container, `.markers circle[data-cluster="${second}"]`);
    expect(firstNodes.length).toBe(3);
    expect(secondNodes.length).toBe(1);

    store.setClusterColor(first, [228, 26, 28]);
    panel.repaintCluster(first, [228, 26, 28]);

    /* same DOM nodes, new stroke; the other cluster's node is untouched */
    const firstAfter = qa(container, `.markers circle[data-cluster="${first}"]`);
    expect(firstAfter).toEqual(firstNodes);
    expect(firstAfter.every((n, i) => n === firstNodes[i])).toBe(true);
    expect(firstAfter.every((n) => n.getAttribute('stroke') === 'rgb(228, 26, 28)')).toBe(true);
    expect(secondNodes[0].getAttribute('stroke')).toBe('rgb(153, 153, 153)');
  });

  it('keeps assigned colors when markers are redrawn on a new plane', async () => {
    const { container, fake, panel, store } = await build();
    const payload = await thresholdPayload(fake);
    panel.setClusters(payload.clusters);
    const first = payload.clusters[0].id;
    store.setClusterColor(first, [228, 26, 28]);
    panel.repaintCluster(first, [228, 26, 28]);
    store.setSlice(0, 5);
    await flush();
    const node = q(container, `[data-axis=sagittal] .markers circle[data-cluster="${first}"]`);
    expect(node.getAttribute('stroke')).toBe('rgb(228, 26, 28)');
  });

  it('discards a stale slice response that resolves after a newer one', async () => {
    const container = mount();
    const store = new StateStore();
    const pending: { index: number; gate: ReturnType<typeof deferred<SlicePayload>> }[] = [];
    const source: SliceSource = {
      layers: ['stat'],
      fetch: (axis, index) => {
        const gate = deferred<SlicePayload>();
        pending.push({ index, gate });
        return gate.promise;
      },
    };
    const panel = new SlicesPanel(container, store, { scale: 4 });
    store.setStudy('study-1', [10, 1, 1]);
    panel.setSource(source);
    const payloadFor = (index: number): SlicePayload => ({
      axis: 'sagittal',
      index,
      n_slices: 10,
      window: [-4, 4],
      shape: [4, 4],
      scale: 4,
      png: btoa(`slice-${index}`),
    });

    store.setSlice(0, 6);
    store.setSlice(0, 7);
    const bySlice = (index: number) => pending.filter((p) => p.index === index);
    expect(bySlice(6).length).toBe(1);
    expect(bySlice(7).length).toBe(1);

    bySlice(7)[0].gate.resolve(payloadFor(7));
    await flush();
    bySlice(6)[0].gate.resolve(payloadFor(6));
    await flush();
    const image = q<HTMLImageElement>(container, '[data-axis=sagittal] img');
    expect(decodeMarker(image.src)).toBe('slice-7');
    /* the initial mid-slice request (index 5) also resolves late */
    bySlice(5)[0]?.gate.resolve(payloadFor(5));
    await flush();
    expect(decodeMarker(image.src)).toBe('slice-7');
  });

  it('clears images and captions when the source is removed', async () => {
    const { container, panel } = await build();
    panel.setSource(null);
    await flush();
    const image = q<HTMLImageElement>(container, '[data-axis=axial] img');
    expect(image.hasAttribute('src')).toBe(false);
    expect(q(container, '[data-axis=axial] .slice-caption').textContent).toBe('');
  });
});
