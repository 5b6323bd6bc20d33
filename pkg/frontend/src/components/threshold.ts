/* Threshold explorer: a slider bound to the cumulative super-threshold
 * histogram, with debounced cluster extraction on the server.
 *
 * Slider positions 0..n-1 land exactly on the histogram's threshold
 * grid, and the count readout repeats the histogram value at that
 * position verbatim. One extra notch sits a bin width above the map
 * maximum so the very top of the slider clears the view; its readout is
 * the n_voxels count the server returns for that threshold, since the
 * histogram has no value there. Requests are trailing-debounced to at
 * most five per second.
 */

import type { Api, HistogramPayload, ThresholdPayload } from '../api.js';
import { clear, el, svgEl } from '../dom.js';
import { Latest, type StateStore } from '../state.js';

const DEBOUNCE_MS = 200;
const CURVE_WIDTH = 360;
const CURVE_HEIGHT = 90;

export interface ThresholdOptions {
  onThreshold: (payload: ThresholdPayload) => void;
  bins?: number;
}

export class ThresholdPanel {
  private testId: string | null = null;
  private histogram: HistogramPayload | null = null;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private readonly gate = new Latest();

  private readonly slider: HTMLInputElement;
  private readonly countLabel: HTMLElement;
  private readonly valueLabel: HTMLElement;
  private readonly curveBox: HTMLElement;

  constructor(
    container: HTMLElement,
    private readonly api: Api,
    private readonly store: StateStore,
    private readonly options: ThresholdOptions,
  ) {
    this.slider = el('input', { type: 'range', min: 0, max: 0, value: 0, class: 'threshold-slider' });
    this.countLabel = el('span', { class: 'super-count' });
    this.valueLabel = el('span', { class: 'threshold-value' });
    this.curveBox = el('div', { class: 'histogram' });

    this.slider.addEventListener('input', () => this.handleSlide());

    container.append(
      el('h3', {}, ['threshold']),
      this.curveBox,
      this.slider,
      el('div', { class: 'threshold-readout' }, [
        this.valueLabel,
        ' ',
        this.countLabel,
      ]),
    );
  }

  async setTest(testId: string): Promise<void> {
    this.testId = testId;
    const histogram = await this.gate.wrap(this.api.getHistogram(testId, this.options.bins ?? 256));
    if (histogram === null) return;
    this.histogram = histogram;
    const n = histogram.thresholds.length;
    this.slider.min = '0';
    /* position n is the clear notch above the histogram's top */
    this.slider.max = String(n);
    const start = this.positionFor(defaultStart(histogram));
    this.slider.value = String(start);
    this.store.setThresholdRange([histogram.thresholds[0], histogram.thresholds[n - 1]], this.binWidth());
    this.drawCurve();
    this.handleSlide();
  }

  private binWidth(): number {
    const t = this.histogram?.thresholds ?? [0, 1];
    return t.length > 1 ? t[1] - t[0] : 1;
  }

  private positionFor(threshold: number): number {
    const t = this.histogram?.thresholds ?? [];
    let best = 0;
    for (let i = 0; i < t.length; i++) {
      if (Math.abs(t[i] - threshold) < Math.abs(t[best] - threshold)) best = i;
    }
    return best;
  }

  thresholdAt(position: number): number {
    const t = this.histogram!.thresholds;
    return position < t.length ? t[position] : t[t.length - 1] + this.binWidth();
  }

  private handleSlide(): void {
    if (this.histogram === null) return;
    const position = Number(this.slider.value);
    const threshold = this.thresholdAt(position);
    this.valueLabel.textContent = `${this.histogram.surface} >= ${threshold.toPrecision(4)}`;
    const counts = this.histogram.counts;
    if (position < counts.length) {
      this.countLabel.textContent = `${counts[position]} voxels`;
    } else {
      this.countLabel.textContent = 'pending';
    }
    this.store.setThreshold(threshold);
    this.schedule(threshold, position);
  }

  private schedule(threshold: number, position: number): void {
    if (this.timer !== null) {
      clearTimeout(this.timer);
    }
    this.timer = setTimeout(() => {
      this.timer = null;
      void this.apply(threshold, position);
    }, DEBOUNCE_MS);
  }

  private async apply(threshold: number, position: number): Promise<void> {
    if (this.testId === null) return;
    const payload = await this.gate.wrap(this.api.postThreshold(this.testId, threshold, 26));
    if (payload === null) return;
    if (position >= (this.histogram?.counts.length ?? 0)) {
      this.countLabel.textContent = `${payload.n_voxels} voxels`;
    }
    this.options.onThreshold(payload);
  }

  private drawCurve(): void {
    clear(this.curveBox);
    if (this.histogram === null) return;
    const { thresholds, counts } = this.histogram;
    const maxCount = Math.max(...counts, 1);
    const span = thresholds[thresholds.length - 1] - thresholds[0] || 1;
    const points = thresholds
      .map((t, i) => {
        const x = ((t - thresholds[0]) / span) * CURVE_WIDTH;
        const y = CURVE_HEIGHT - (counts[i] / maxCount) * CURVE_HEIGHT;
        return `${x.toFixed(1)},${y.toFixed(1)}`;
      })
      .join(' ');
    const svg = svgEl('svg', { width: CURVE_WIDTH, height: CURVE_HEIGHT, class: 'histogram-curve' });
    svg.append(svgEl('polyline', { points, fill: 'none', 'stroke-width': 1.5, class: 'curve' }));
    this.curveBox.append(svg);
  }
}

function defaultStart(histogram: HistogramPayload): number {
  /* start mid-curve rather than at zero so the first table is useful */
  const t = histogram.thresholds;
  return t[Math.floor(t.length / 2)];
}
