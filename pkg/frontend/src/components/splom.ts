/* Scatter-plot matrix over the six steerable axes.
 *
 * The 6x6 grid holds exactly 15 scatter cells below the diagonal and 6
 * boxplot cells on it; cells above the diagonal stay blank. Subjects
 * are colored by group with the same two colors used everywhere else.
 * Hovering a scatter cell shows the server's Pearson r for that axis
 * pair; hovering a boxplot shows the server's t and p for that axis.
 * Whisker and quartile geometry is drawn from the per-subject
 * coordinates, but no number derived from them is ever displayed.
 * Axes the server flags invalid render as disabled cells.
 */

import type { SplomPayload } from '../api.js';
import { clear, el, svgEl } from '../dom.js';
import { fmt3 } from '../format.js';
import { attachTooltip } from '../tooltip.js';

export const GROUP_COLORS = ['#1b9e77', '#d95f02'];

const CELL = 84;
const PAD = 8;

export class SplomPanel {
  private readonly title: HTMLElement;
  private readonly grid: HTMLElement;

  constructor(private readonly container: HTMLElement) {
    this.title = el('div', { class: 'splom-title' });
    this.grid = el('div', { class: 'splom-grid' });
    this.grid.style.display = 'grid';
    this.grid.style.gridTemplateColumns = `repeat(6, ${CELL}px)`;
    container.append(el('h3', {}, ['scatter-plot matrix']), this.title, this.grid);
  }

  render(payload: SplomPayload, groupNames?: [string, string]): void {
    this.title.textContent =
      `${payload.location} (${payload.n_voxels} ${payload.n_voxels === 1 ? 'voxel' : 'voxels'})`;
    clear(this.grid);
    /* fixed group order keeps one color per group across every panel */
    const groups: string[] = groupNames ?? [...new Set(payload.subjects.map((s) => s.group))];
    for (let row = 0; row < 6; row++) {
      for (let col = 0; col < 6; col++) {
        this.grid.append(this.buildCell(payload, row, col, groups));
      }
    }
  }

  private buildCell(payload: SplomPayload, row: number, col: number, groups: string[]): HTMLElement {
    if (col > row) {
      return el('div', { class: 'splom-cell blank' });
    }
    const valid = payload.valid_axes[row] && payload.valid_axes[col];
    if (!valid) {
      const cell = el('div', { class: 'splom-cell disabled' });
      cell.append(el('span', { class: 'disabled-label' }, ['n/a']));
      return cell;
    }
    return col === row
      ? this.buildBoxplot(payload, row, groups)
      : this.buildScatter(payload, row, col, groups);
  }

  private buildScatter(payload: SplomPayload, row: number, col: number, groups: string[]): HTMLElement {
    const cell = el('div', { class: 'splom-cell scatter', 'data-x': payload.axes[col], 'data-y': payload.axes[row] });
    const svg = svgEl('svg', { width: CELL, height: CELL });
    const xs = payload.subjects.map((s) => s.coordinates[col]);
    const ys = payload.subjects.map((s) => s.coordinates[row]);
    const xScale = linearScale(xs, PAD, CELL - PAD);
    const yScale = linearScale(ys, CELL - PAD, PAD);
    for (const subject of payload.subjects) {
      svg.append(
        svgEl('circle', {
          cx: xScale(subject.coordinates[col]),
          cy: yScale(subject.coordinates[row]),
          r: 2.5,
          fill: GROUP_COLORS[groups.indexOf(subject.group)] ?? GROUP_COLORS[0],
          'fill-opacity': 0.8,
          'data-subject': subject.id,
          'data-group': subject.group,
        }),
      );
    }
    cell.append(svg);
    const pair = payload.pearson.find(
      (p) =>
        (p.axes[0] === payload.axes[col] && p.axes[1] === payload.axes[row]) ||
        (p.axes[0] === payload.axes[row] && p.axes[1] === payload.axes[col]),
    );
    attachTooltip(cell, () => `${payload.axes[col]} vs ${payload.axes[row]}: r = ${fmt3(pair?.r ?? NaN)}`);
    return cell;
  }

  private buildBoxplot(payload: SplomPayload, axis: number, groups: string[]): HTMLElement {
    const cell = el('div', { class: 'splom-cell boxplot', 'data-axis': payload.axes[axis] });
    const svg = svgEl('svg', { width: CELL, height: CELL });
    const values = payload.subjects.map((s) => s.coordinates[axis]);
    const yScale = linearScale(values, CELL - PAD, PAD);
    const slot = CELL / (groups.length + 1);
    groups.forEach((group, g) => {
      const sample = payload.subjects.filter((s) => s.group === group).map((s) => s.coordinates[axis]);
      if (sample.length === 0) return;
      const box = boxStats(sample);
      const x = slot * (g + 1);
      const half = slot * 0.3;
      const color = GROUP_COLORS[g] ?? GROUP_COLORS[0];
      svg.append(
        svgEl('line', { x1: x, y1: yScale(box.low), x2: x, y2: yScale(box.high), stroke: color, class: 'whisker' }),
        svgEl('rect', {
          x: x - half,
          y: yScale(box.q3),
          width: half * 2,
          height: Math.max(yScale(box.q1) - yScale(box.q3), 1),
          fill: color,
          'fill-opacity': 0.35,
          stroke: color,
          'data-group': group,
        }),
        svgEl('line', {
          x1: x - half,
          y1: yScale(box.median),
          x2: x + half,
          y2: yScale(box.median),
          stroke: color,
          'stroke-width': 2,
          class: 'median',
        }),
      );
    });
    svg.append(
      svgEl('text', { x: 4, y: 12, class: 'axis-label' }, [payload.axes[axis]]),
    );
    cell.append(svg);
    const test = payload.axis_tests.find((t) => t.axis === payload.axes[axis]);
    attachTooltip(
      cell,
      () => `${payload.axes[axis]}: t = ${fmt3(test?.t ?? NaN)}, p = ${fmt3(test?.p ?? NaN)}`,
    );
    return cell;
  }
}

function linearScale(values: number[], outLow: number, outHigh: number): (v: number) => number {
  const finite = values.filter((v) => Number.isFinite(v));
  const low = finite.length ? Math.min(...finite) : 0;
  const high = finite.length ? Math.max(...finite) : 1;
  const span = high - low || 1;
  return (v) => outLow + ((v - low) / span) * (outHigh - outLow);
}

function boxStats(sample: number[]): { low: number; q1: number; median: number; q3: number; high: number } {
  const sorted = [...sample].sort((a, b) => a - b);
  const q = (f: number): number => {
    const pos = (sorted.length - 1) * f;
    const base = Math.floor(pos);
    const rest = pos - base;
    return base + 1 < sorted.length ? sorted[base] + rest * (sorted[base + 1] - sorted[base]) : sorted[base];
  };
  return { low: sorted[0], q1: q(0.25), median: q(0.5), q3: q(0.75), high: sorted[sorted.length - 1] };
}
