/* Small-multiple tensor glyphs: one 3-D superquadric per subject,
 * rendered to SVG from the eigensystem the server returns for the
 * inspected voxel. Every subwindow draws through the same OrbitCamera
 * instance, so dragging in any one of them rotates them all; the reset
 * button restores the shared home pose.
 *
 * All subwindows share one eigenvalue scale, so a subject with a larger
 * tensor draws a larger glyph.
 */

import type { GlyphsPayload, Triple } from '../api.js';
import { clear, el, svgEl } from '../dom.js';
import { rgbCss } from '../format.js';
import {
  OrbitCamera,
  glyphMesh,
  principalColor,
  project,
  shade,
  type Face,
} from '../geometry.js';
import { GROUP_COLORS } from './splom.js';

const VIEW = 110;
const DRAG_GAIN = 0.01;

interface Subwindow {
  svg: SVGSVGElement;
  faces: Face[];
  base: Triple;
}

export class GlyphsPanel {
  readonly camera = new OrbitCamera();

  private payload: GlyphsPayload | null = null;
  private readonly title: HTMLElement;
  private readonly grid: HTMLElement;
  private readonly windows: Subwindow[] = [];

  constructor(private readonly container: HTMLElement) {
    this.title = el('div', { class: 'glyphs-title' });
    this.grid = el('div', { class: 'glyph-grid' });
    const reset = el('button', { class: 'camera-reset' }, ['reset view']);
    reset.addEventListener('click', () => this.camera.reset());
    container.append(el('h3', {}, ['tensor glyphs']), this.title, reset, this.grid);
    this.camera.onChange(() => this.drawAll());
  }

  render(payload: GlyphsPayload): void {
    this.payload = payload;
    const [i, j, k] = payload.voxel;
    this.title.textContent = `voxel (${i}, ${j}, ${k})`;
    clear(this.grid);
    this.windows.length = 0;

    const maxEigenvalue = Math.max(...payload.subjects.map((s) => s.eigenvalues[0]), 1e-12);
    const radiusScale = 1 / maxEigenvalue;

    for (const subject of payload.subjects) {
      const svg = svgEl('svg', {
        width: VIEW,
        height: VIEW,
        class: 'glyph-subwindow',
        'data-subject': subject.id,
      });
      this.bindDrag(svg);
      const groupIndex = payload.group_names.indexOf(subject.group);
      const label = el('div', { class: 'glyph-label' }, [subject.id]);
      label.style.color = GROUP_COLORS[groupIndex >= 0 ? groupIndex : 0];
      const box = el('div', { class: 'glyph-box' }, [svg, label]);
      if (subject.degenerate) {
        box.classList.add('degenerate');
        label.append(el('span', { class: 'degenerate-flag' }, [' (degenerate)']));
      }
      this.grid.append(box);
      this.windows.push({
        svg,
        faces: glyphMesh(subject, radiusScale),
        base: principalColor(subject),
      });
    }
    this.drawAll();
  }

  private bindDrag(svg: SVGSVGElement): void {
    let dragging = false;
    let lastX = 0;
    let lastY = 0;
    svg.addEventListener('mousedown', (event) => {
      dragging = true;
      lastX = (event as MouseEvent).clientX;
      lastY = (event as MouseEvent).clientY;
    });
    svg.addEventListener('mousemove', (event) => {
      if (!dragging) return;
      const mouse = event as MouseEvent;
      this.camera.rotate((mouse.clientX - lastX) * DRAG_GAIN, (mouse.clientY - lastY) * DRAG_GAIN);
      lastX = mouse.clientX;
      lastY = mouse.clientY;
    });
    for (const done of ['mouseup', 'mouseleave'] as const) {
      svg.addEventListener(done, () => {
        dragging = false;
      });
    }
  }

  private drawAll(): void {
    for (const window of this.windows) {
      this.drawGlyph(window);
    }
  }

  private drawGlyph(window: Subwindow): void {
    clear(window.svg);
    const projected = window.faces.map((face) => {
      const corners = face.points.map((p) => project(this.camera, p, [0, 0, 0], VIEW, VIEW, 2.4));
      const depth = corners.reduce((sum, c) => sum + c.depth, 0) / corners.length;
      return { face, corners, depth };
    });
    projected.sort((a, b) => a.depth - b.depth);
    for (const { face, corners } of projected) {
      const points = corners.map((c) => `${c.x.toFixed(1)},${c.y.toFixed(1)}`).join(' ');
      window.svg.append(
        svgEl('polygon', {
          points,
          fill: rgbCss(shade(this.camera, face.normal, window.base)),
        }),
      );
    }
  }
}
