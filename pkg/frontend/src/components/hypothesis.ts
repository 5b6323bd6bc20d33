/* Hypothesis builder: one toggle per steerable axis, smoothing and TFCE
 * controls, and a run button that posts the test. The run button stays
 * disabled while nothing is selected or a request is in flight; server
 * rejections are shown verbatim.
 */

import { ApiError, type Api, type TestCard } from '../api.js';
import { clear, el } from '../dom.js';

const AXIS_LABELS: Record<string, string> = {
  norm: 'norm',
  fa: 'FA',
  mode: 'mode',
  rot1: 'rot1',
  rot2: 'rot2',
  rot3: 'rot3',
};

export interface HypothesisOptions {
  onTest: (test: TestCard) => void;
}

export class HypothesisPanel {
  private axes: string[] = [];
  private studyId: string | null = null;
  private pending = false;

  private readonly boxes = new Map<string, HTMLInputElement>();
  private readonly smoothing: HTMLInputElement;
  private readonly tfce: HTMLInputElement;
  private readonly runButton: HTMLButtonElement;
  private readonly errorBox: HTMLElement;
  private readonly axisRow: HTMLElement;

  constructor(
    private readonly container: HTMLElement,
    private readonly api: Api,
    private readonly options: HypothesisOptions,
  ) {
    this.axisRow = el('div', { class: 'axis-toggles' });
    this.smoothing = el('input', { type: 'number', min: 0, step: 0.1, value: 0, class: 'smoothing' });
    this.tfce = el('input', { type: 'checkbox', class: 'tfce' });
    this.runButton = el('button', { class: 'run', disabled: true }, ['run test']);
    this.errorBox = el('div', { class: 'error' });

    this.runButton.addEventListener('click', () => void this.run());

    container.append(
      el('h3', {}, ['hypothesis']),
      this.axisRow,
      el('label', {}, ['smoothing (voxels) ', this.smoothing]),
      el('label', {}, [this.tfce, ' TFCE']),
      this.runButton,
      this.errorBox,
    );
  }

  setStudy(studyId: string, axes: string[]): void {
    this.studyId = studyId;
    this.axes = axes;
    this.boxes.clear();
    clear(this.axisRow);
    for (const axis of axes) {
      const box = el('input', { type: 'checkbox', 'data-axis': axis });
      box.addEventListener('change', () => this.refresh());
      this.boxes.set(axis, box);
      this.axisRow.append(el('label', { class: 'axis-toggle' }, [box, AXIS_LABELS[axis] ?? axis]));
    }
    this.refresh();
  }

  selectedAxes(): string[] {
    return this.axes.filter((axis) => this.boxes.get(axis)?.checked);
  }

  config(): { axes: string[]; use_tfce: boolean; smoothing_sigma: number; alpha: number } {
    return {
      axes: this.selectedAxes(),
      use_tfce: this.tfce.checked,
      smoothing_sigma: Number(this.smoothing.value) || 0,
      alpha: 0.05,
    };
  }

  private refresh(): void {
    const runnable = this.studyId !== null && this.selectedAxes().length > 0 && !this.pending;
    this.runButton.disabled = !runnable;
  }

  private async run(): Promise<void> {
    if (this.studyId === null) return;
    this.pending = true;
    this.refresh();
    this.errorBox.textContent = '';
    try {
      const test = await this.api.postTest(this.studyId, this.config());
      this.options.onTest(test);
    } catch (error) {
      this.errorBox.textContent = error instanceof ApiError ? error.message : String(error);
    } finally {
      this.pending = false;
      this.refresh();
    }
  }
}
