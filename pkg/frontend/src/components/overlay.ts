/* Overlay comparison: up to three stored masks composited by the server
 * over the study background, with a Venn legend. Region counts and
 * blended region colors are shown exactly as the /compare payload
 * reports them; the composited slice PNG is the server's, and toggling
 * a mask's visibility issues exactly one slice request.
 */

import type { Api, ComparePayload, Triple } from '../api.js';
import { clear, el, pngDataUri, svgEl } from '../dom.js';
import { rgbCss } from '../format.js';
import { SLICE_NAMES } from '../orientation.js';
import { Latest, type StateStore } from '../state.js';
import { attachTooltip } from '../tooltip.js';

const DEFAULT_COLORS = ['#e41a1c', '#377eb8', '#4daf4a'];
const VENN_CENTERS = [
  { cx: 60, cy: 55 },
  { cx: 100, cy: 55 },
  { cx: 80, cy: 90 },
];

interface Slot {
  select: HTMLSelectElement;
  color: HTMLInputElement;
  visible: HTMLInputElement;
  label: HTMLElement;
}

export class OverlayPanel {
  private known: { id: string; label: string }[] = [];
  private payload: ComparePayload | null = null;
  private readonly slots: Slot[] = [];
  private readonly gate = new Latest();

  private readonly applyButton: HTMLButtonElement;
  private readonly image: HTMLImageElement;
  private readonly axisSelect: HTMLSelectElement;
  private readonly indexSlider: HTMLInputElement;
  private readonly vennBox: HTMLElement;
  private readonly legend: HTMLElement;
  private readonly errorBox: HTMLElement;

  constructor(
    container: HTMLElement,
    private readonly api: Api,
    private readonly store: StateStore,
  ) {
    const slotRow = el('div', { class: 'overlay-slots' });
    for (let i = 0; i < 3; i++) {
      const select = el('select', { class: 'mask-select' }, [el('option', { value: '' }, ['(none)'])]);
      const color = el('input', { type: 'color', value: DEFAULT_COLORS[i] });
      const visible = el('input', { type: 'checkbox', checked: true, class: 'mask-visible' });
      visible.addEventListener('change', () => void this.refreshSlice());
      const label = el('span', { class: 'slot-letter' });
      this.slots.push({ select, color, visible, label });
      slotRow.append(el('div', { class: 'overlay-slot' }, [label, select, color, el('label', {}, [visible, ' show'])]));
    }

    this.applyButton = el('button', { class: 'compare' }, ['compare']);
    this.applyButton.addEventListener('click', () => void this.compare());
    this.image = el('img', { class: 'overlay-image', alt: 'composited slice' });
    this.axisSelect = el('select', { class: 'overlay-axis' });
    for (const name of SLICE_NAMES) {
      this.axisSelect.append(el('option', { value: name }, [name]));
    }
    this.axisSelect.value = 'axial';
    this.axisSelect.addEventListener('change', () => void this.refreshSlice());
    this.indexSlider = el('input', { type: 'range', min: 0, max: 0, value: 0 });
    this.indexSlider.addEventListener('input', () => void this.refreshSlice());
    this.vennBox = el('div', { class: 'venn' });
    this.legend = el('div', { class: 'venn-legend' });
    this.errorBox = el('div', { class: 'error' });

    container.append(
      el('h3', {}, ['overlay comparison']),
      slotRow,
      this.applyButton,
      this.errorBox,
      el('div', { class: 'overlay-views' }, [
        el('div', {}, [
          el('div', { class: 'overlay-controls' }, [this.axisSelect, this.indexSlider]),
          this.image,
        ]),
        el('div', {}, [this.vennBox, this.legend]),
      ]),
    );
  }

  /* Threshold responses feed the pool of masks available for comparison. */
  offerMask(id: string, label: string): void {
    if (this.known.some((m) => m.id === id)) return;
    this.known.push({ id, label });
    for (const slot of this.slots) {
      slot.select.append(el('option', { value: id }, [`${label} (${id})`]));
    }
  }

  private chosen(): { ids: string[]; colors: string[]; names: string[] } {
    const ids: string[] = [];
    const colors: string[] = [];
    const names: string[] = [];
    for (const slot of this.slots) {
      if (slot.select.value !== '') {
        ids.push(slot.select.value);
        colors.push(slot.color.value);
        names.push(this.known.find((m) => m.id === slot.select.value)?.label ?? slot.select.value);
      }
    }
    return { ids, colors, names };
  }

  private async compare(): Promise<void> {
    const { ids, colors, names } = this.chosen();
    if (ids.length === 0) return;
    this.errorBox.textContent = '';
    let payload: ComparePayload;
    try {
      payload = await this.api.postCompare(ids, colors, names);
    } catch (error) {
      this.errorBox.textContent = String((error as Error).message ?? error);
      return;
    }
    this.payload = payload;
    const filled = this.slots.filter((slot) => slot.select.value !== '');
    payload.masks.forEach((mask, i) => {
      filled[i].label.textContent = mask.letter;
    });
    const axis = SLICE_NAMES.indexOf(this.axisSelect.value as (typeof SLICE_NAMES)[number]);
    this.indexSlider.max = String(this.store.current.dims[axis] - 1);
    this.indexSlider.value = String(this.store.current.slice[axis]);
    this.drawVenn(payload);
    await this.refreshSlice();
  }

  private visibleLetters(): string {
    if (this.payload === null) return '';
    const filled = this.slots.filter((slot) => slot.select.value !== '');
    return this.payload.masks
      .filter((_, i) => filled[i]?.visible.checked)
      .map((mask) => mask.letter)
      .join('');
  }

  private async refreshSlice(): Promise<void> {
    if (this.payload === null) return;
    const axisName = this.axisSelect.value;
    const axis = SLICE_NAMES.indexOf(axisName as (typeof SLICE_NAMES)[number]);
    this.indexSlider.max = String(this.store.current.dims[axis] - 1);
    const index = Number(this.indexSlider.value);
    const slice = await this.gate.wrap(
      this.api.getCompareSlice(this.payload.id, axisName, index, this.visibleLetters(), 4),
    );
    if (slice === null) return;
    this.image.src = pngDataUri(slice.png);
  }

  private drawVenn(payload: ComparePayload): void {
    clear(this.vennBox);
    clear(this.legend);
    const svg = svgEl('svg', { width: 160, height: 140, class: 'venn-diagram' });
    payload.masks.forEach((mask, i) => {
      const { cx, cy } = VENN_CENTERS[i];
      svg.append(
        svgEl('circle', {
          cx,
          cy,
          r: 34,
          fill: rgbCss(mask.color),
          'fill-opacity': 0.45,
          stroke: rgbCss(mask.color),
          'data-letter': mask.letter,
        }),
      );
      svg.append(svgEl('text', { x: cx, y: cy - 38, 'text-anchor': 'middle', class: 'venn-letter' }, [mask.letter]));
    });
    attachTooltip(svg, () =>
      Object.entries(payload.regions)
        .map(([label, count]) => `${label}: ${count}`)
        .join(', '),
    );
    this.vennBox.append(svg);

    for (const [label, color] of Object.entries(payload.region_colors)) {
      const swatch = el('span', { class: 'legend-swatch', 'data-region': label });
      swatch.style.background = rgbCss(color);
      this.legend.append(
        el('div', { class: 'legend-entry' }, [swatch, ` ${label}: ${payload.regions[label]} voxels`]),
      );
    }
  }
}
