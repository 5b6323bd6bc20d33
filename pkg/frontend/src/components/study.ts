/* Study loader: paste a manifest JSON to register a study with the
 * service, or enter the id of one already loaded. Paths inside the
 * manifest resolve against the service's data directory.
 */

import { ApiError, type Api, type StudyCard } from '../api.js';
import { el } from '../dom.js';

export interface StudyOptions {
  onStudy: (study: StudyCard) => void;
}

export class StudyPanel {
  private readonly manifestBox: HTMLTextAreaElement;
  private readonly idInput: HTMLInputElement;
  private readonly errorBox: HTMLElement;
  private readonly card: HTMLElement;

  constructor(
    container: HTMLElement,
    private readonly api: Api,
    private readonly options: StudyOptions,
  ) {
    this.manifestBox = el('textarea', { class: 'manifest', rows: 6, placeholder: 'study manifest JSON' });
    const loadManifest = el('button', { class: 'load-manifest' }, ['load manifest']);
    loadManifest.addEventListener('click', () => void this.loadManifest());
    this.idInput = el('input', { type: 'text', placeholder: 'study id', class: 'study-id' });
    const loadId = el('button', { class: 'load-id' }, ['open study']);
    loadId.addEventListener('click', () => void this.loadById());
    this.errorBox = el('div', { class: 'error' });
    this.card = el('div', { class: 'study-card' });

    container.append(
      el('h3', {}, ['study']),
      this.manifestBox,
      loadManifest,
      el('div', {}, [this.idInput, loadId]),
      this.errorBox,
      this.card,
    );
  }

  private async loadManifest(): Promise<void> {
    let manifest: Record<string, unknown>;
    try {
      manifest = JSON.parse(this.manifestBox.value);
    } catch {
      this.errorBox.textContent = 'manifest is not valid JSON';
      return;
    }
    await this.load(() => this.api.postStudy(manifest));
  }

  private async loadById(): Promise<void> {
    const id = this.idInput.value.trim();
    if (id === '') return;
    await this.load(() => this.api.getStudy(id));
  }

  private async load(fetcher: () => Promise<StudyCard>): Promise<void> {
    this.errorBox.textContent = '';
    try {
      const study = await fetcher();
      this.describe(study);
      this.options.onStudy(study);
    } catch (error) {
      this.errorBox.textContent = error instanceof ApiError ? error.message : String(error);
    }
  }

  private describe(study: StudyCard): void {
    this.card.textContent =
      `${study.id}: ${study.dims.join('x')} grid, ${study.mask_voxels} mask voxels, ` +
      `${study.group_names[0]} n=${study.group_sizes[0]} vs ${study.group_names[1]} n=${study.group_sizes[1]}`;
  }
}
