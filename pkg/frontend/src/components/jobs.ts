/* Permutation job launcher: posts a background job for the current
 * hypothesis, polls its progress, and hands the finished result to the
 * app so the corrected-p layers can be browsed like any other slices.
 * The service allows one running job per study; a 409 is shown verbatim.
 */

import { ApiError, type Api, type JobCard, type ResultCard } from '../api.js';
import { el } from '../dom.js';

const POLL_MS = 500;

export interface JobsOptions {
  config: () => { axes: string[]; use_tfce: boolean; smoothing_sigma: number };
  onResult: (result: ResultCard) => void;
  pollMs?: number;
}

export class JobsPanel {
  private studyId: string | null = null;
  private job: JobCard | null = null;

  private readonly nInput: HTMLInputElement;
  private readonly seedInput: HTMLInputElement;
  private readonly startButton: HTMLButtonElement;
  private readonly cancelButton: HTMLButtonElement;
  private readonly progress: HTMLProgressElement;
  private readonly status: HTMLElement;

  constructor(
    container: HTMLElement,
    private readonly api: Api,
    private readonly options: JobsOptions,
  ) {
    this.nInput = el('input', { type: 'number', min: 100, step: 100, value: 1000, class: 'perm-n' });
    this.seedInput = el('input', { type: 'number', value: 0, class: 'perm-seed' });
    this.startButton = el('button', { class: 'perm-start' }, ['permute']);
    this.cancelButton = el('button', { class: 'perm-cancel', disabled: true }, ['cancel']);
    this.progress = el('progress', { max: 1, value: 0, class: 'perm-progress' });
    this.status = el('div', { class: 'perm-status' });

    this.startButton.addEventListener('click', () => void this.start());
    this.cancelButton.addEventListener('click', () => void this.cancel());

    container.append(
      el('h3', {}, ['permutation correction']),
      el('label', {}, ['permutations ', this.nInput]),
      el('label', {}, ['seed ', this.seedInput]),
      this.startButton,
      this.cancelButton,
      this.progress,
      this.status,
    );
  }

  setStudy(studyId: string): void {
    this.studyId = studyId;
  }

  private async start(): Promise<void> {
    if (this.studyId === null) return;
    this.status.textContent = '';
    const config = this.options.config();
    try {
      this.job = await this.api.postPermutationJob(this.studyId, {
        ...config,
        n: Number(this.nInput.value),
        seed: Number(this.seedInput.value),
      });
    } catch (error) {
      this.status.textContent = error instanceof ApiError ? error.message : String(error);
      return;
    }
    this.startButton.disabled = true;
    this.cancelButton.disabled = false;
    this.status.textContent = `job ${this.job.id} ${this.job.status}`;
    void this.poll();
  }

  private async cancel(): Promise<void> {
    if (this.job === null) return;
    const job = await this.api.deleteJob(this.job.id);
    this.job = job;
    this.status.textContent = `job ${job.id} ${job.status}`;
  }

  private async poll(): Promise<void> {
    while (this.job !== null) {
      const job = await this.api.getJob(this.job.id);
      this.job = job;
      this.progress.value = job.progress;
      this.status.textContent = `job ${job.id} ${job.status}`;
      if (job.status === 'done' && job.result !== null) {
        const result = await this.api.getResult(job.result);
        this.status.textContent =
          `job ${job.id} done: ${result.n_permutations} permutations, ` +
          `min corrected p ${result.min_corrected_p ?? 'n/a'}`;
        this.options.onResult(result);
        break;
      }
      if (job.status === 'failed' || job.status === 'canceled') {
        if (job.error !== null) {
          this.status.textContent = `job ${job.id} ${job.status}: ${job.error}`;
        }
        break;
      }
      await sleep(this.options.pollMs ?? POLL_MS);
    }
    this.startButton.disabled = false;
    this.cancelButton.disabled = true;
  }
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}
