import { afterEach, beforeEach, describe, expect, it, vi } from 'vitest';

import type { ThresholdPayload } from '../src/api.js';
import { ThresholdPanel } from '../src/components/threshold.js';
import { StateStore } from '../src/state.js';
import { FakeApi, HISTOGRAM_MAX } from './fake_api.js';
import { flush, mount, q, qa, setValue } from './helpers.js';

/* bins = 4 gives thresholds [0, 2, 4, 6] with counts [500, 222, 55, 1] */
const BINS = 4;

async function build() {
  const container = mount();
  const fake = new FakeApi();
  const store = new StateStore();
  const payloads: ThresholdPayload[] = [];
  const panel = new ThresholdPanel(container, fake, store, {
    bins: BINS,
    onThreshold: (p) => payloads.push(p),
  });
  await panel.setTest('test-1');
  await flush();
  return { container, fake, store, panel, payloads };
}

beforeEach(() => {
  vi.useFakeTimers();
});

afterEach(() => {
  vi.useRealTimers();
});

describe('ThresholdPanel', () => {
  it('binds the slider to the histogram grid plus one clear notch', async () => {
    const { container, fake } = await build();
    expect(fake.last('getHistogram')!.args).toEqual(['test-1', BINS]);
    const slider = q<HTMLInputElement>(container, 'input.threshold-slider');
    expect(slider.min).toBe('0');
    expect(slider.max).toBe(String(BINS));
    /* starts mid-curve: position 2, threshold 4 */
    expect(slider.value).toBe('2');
    expect(q(container, '.threshold-value').textContent).toBe('tfce >= 4.000');
  });

  it('repeats the histogram count verbatim at each slider position', async () => {
    const { container } = await build();
    const slider = q<HTMLInputElement>(container, 'input.threshold-slider');
    expect(q(container, '.super-count').textContent).toBe('55 voxels');
    setValue(slider, '0');
    expect(q(container, '.super-count').textContent).toBe('500 voxels');
    setValue(slider, '1');
    expect(q(container, '.super-count').textContent).toBe('222 voxels');
    setValue(slider, '3');
    expect(q(container, '.super-count').textContent).toBe('1 voxels');
  });

  it('draws the cumulative curve with one vertex per bin', async () => {
    const { container } = await build();
    const polyline = q(container, 'svg.histogram-curve polyline.curve');
    expect(polyline.getAttribute('points')!.split(' ').length).toBe(BINS);
  });

  it('publishes the threshold range and value to the store', async () => {
    const { store } = await build();
    expect(store.current.thresholdRange).toEqual([0, HISTOGRAM_MAX]);
    expect(store.current.threshold).toBe(4);
  });

  it('debounces scrubbing to one trailing request, never more than five per second', async () => {
    const { container, fake, payloads } = await build();
    const slider = q<HTMLInputElement>(container, 'input.threshold-slider');
    const before = fake.count('postThreshold');
    /* a second of continuous scrubbing, one event every 50 ms */
    for (let i = 0; i < 20; i++) {
      setValue(slider, String(i % 3));
      await vi.advanceTimersByTimeAsync(50);
    }
    expect(fake.count('postThreshold') - before).toBeLessThanOrEqual(5);
    setValue(slider, '2');
    await vi.advanceTimersByTimeAsync(200);
    await flush();
    /* each pause in movement costs exactly one request */
    expect(fake.count('postThreshold') - before).toBe(1);
    expect(fake.last('postThreshold')!.args).toEqual(['test-1', 4, 26]);
    expect(payloads[payloads.length - 1].threshold).toBe(4);
  });

  it('posts the settled threshold once after the debounce delay', async () => {
    const { container, fake, payloads } = await build();
    const slider = q<HTMLInputElement>(container, 'input.threshold-slider');
    const before = fake.count('postThreshold');
    setValue(slider, '1');
    expect(fake.count('postThreshold')).toBe(before);
    await vi.advanceTimersByTimeAsync(200);
    await flush();
    expect(fake.count('postThreshold')).toBe(before + 1);
    expect(fake.last('postThreshold')!.args).toEqual(['test-1', 2, 26]);
    expect(payloads[payloads.length - 1].clusters.length).toBe(2);
  });

  it('empties the table at the top notch and reports the server count', async () => {
    const { container, fake, payloads, store } = await build();
    const slider = q<HTMLInputElement>(container, 'input.threshold-slider');
    setValue(slider, String(BINS));
    /* no histogram value exists above the map maximum */
    expect(q(container, '.super-count').textContent).toBe('pending');
    await vi.advanceTimersByTimeAsync(200);
    await flush();
    const call = fake.last('postThreshold')!;
    expect(call.args[1] as number).toBeGreaterThan(HISTOGRAM_MAX);
    const final = payloads[payloads.length - 1];
    expect(final.clusters).toEqual([]);
    expect(final.n_voxels).toBe(0);
    expect(q(container, '.super-count').textContent).toBe('0 voxels');
    expect(store.current.threshold).toBe(call.args[1]);
  });

  it('drops a histogram response that is overtaken by a newer test', async () => {
    const container = mount();
    const fake = new FakeApi();
    const store = new StateStore();
    const panel = new ThresholdPanel(container, fake, store, { bins: BINS, onThreshold: () => {} });
    const first = panel.setTest('test-1');
    const second = panel.setTest('test-2');
    await first;
    await second;
    await flush();
    expect(fake.last('getHistogram')!.args[0]).toBe('test-2');
    /* only the latest histogram may drive the slider */
    const slider = q<HTMLInputElement>(container, 'input.threshold-slider');
    expect(slider.max).toBe(String(BINS));
  });
});
