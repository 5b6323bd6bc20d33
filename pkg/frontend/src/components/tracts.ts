/* 3-D streamline view, launched from a thresholded mask. Streamlines
 * arrive as the service's binary payload and are projected to SVG paths
 * through the panel's orbit camera. The three current slices can be
 * shown as context planes: under the orthographic camera each slice
 * rectangle projects to a parallelogram, so the server-rendered PNG is
 * placed with a plain affine transform and never re-colored.
 */

import type { Api, SlicePayload, TractoCard, Triple } from '../api.js';
import { clear, el, pngDataUri, svgEl } from '../dom.js';
import {
  OrbitCamera,
  imagePlaneTransform,
  parseStreamlines,
  project,
  type Streamline,
  type Vec3,
} from '../geometry.js';
import { SLICE_NAMES, planeAxes } from '../orientation.js';
import type { StateStore } from '../state.js';

const WIDTH = 420;
const HEIGHT = 420;
const DRAG_GAIN = 0.01;

export interface TractsOptions {
  fetchSlice?: (axis: string, index: number) => Promise<SlicePayload>;
}

export class TractsPanel {
  readonly camera = new OrbitCamera(0.8, -0.5, 1);

  private streamlines: Streamline[] = [];
  private card: TractoCard | null = null;
  private contextImages: { axis: number; index: number; png: string }[] = [];

  private readonly svg: SVGSVGElement;
  private readonly planes: SVGGElement;
  private readonly lines: SVGGElement;
  private readonly countLabel: HTMLElement;
  private readonly contextToggle: HTMLInputElement;

  constructor(
    container: HTMLElement,
    private readonly api: Api,
    private readonly store: StateStore,
    private readonly options: TractsOptions = {},
  ) {
    this.svg = svgEl('svg', { width: WIDTH, height: HEIGHT, class: 'tract-view' });
    this.planes = svgEl('g', { class: 'context-planes' });
    this.lines = svgEl('g', { class: 'streamlines' });
    this.svg.append(this.planes, this.lines);
    this.countLabel = el('span', { class: 'tract-count' });
    this.contextToggle = el('input', { type: 'checkbox', checked: true });
    this.contextToggle.addEventListener('change', () => void this.refreshContext());
    const reset = el('button', { class: 'camera-reset' }, ['reset view']);
    reset.addEventListener('click', () => this.camera.reset());

    this.bindDrag();
    this.camera.onChange(() => this.draw());

    container.append(
      el('h3', {}, ['tracts']),
      el('div', { class: 'tract-controls' }, [
        el('label', {}, [this.contextToggle, ' context slices']),
        reset,
        this.countLabel,
      ]),
      this.svg,
    );
  }

  async show(card: TractoCard): Promise<void> {
    this.card = card;
    this.countLabel.textContent = `${card.n_streamlines} streamlines, ${card.n_points} points`;
    const buffer = await this.api.getTractoBytes(card.id);
    this.streamlines = parseStreamlines(buffer);
    await this.refreshContext();
    this.draw();
  }

  get lineCount(): number {
    return this.lines.childElementCount;
  }

  private bindDrag(): void {
    let dragging = false;
    let lastX = 0;
    let lastY = 0;
    this.svg.addEventListener('mousedown', (event) => {
      dragging = true;
      lastX = (event as MouseEvent).clientX;
      lastY = (event as MouseEvent).clientY;
    });
    this.svg.addEventListener('mousemove', (event) => {
      if (!dragging) return;
      const mouse = event as MouseEvent;
      this.camera.rotate((mouse.clientX - lastX) * DRAG_GAIN, (mouse.clientY - lastY) * DRAG_GAIN);
      lastX = mouse.clientX;
      lastY = mouse.clientY;
    });
    for (const done of ['mouseup', 'mouseleave'] as const) {
      this.svg.addEventListener(done, () => {
        dragging = false;
      });
    }
  }

  private async refreshContext(): Promise<void> {
    this.contextImages = [];
    if (this.contextToggle.checked && this.options.fetchSlice) {
      const slice = this.store.current.slice;
      for (let axis = 0; axis < 3; axis++) {
        const payload = await this.options.fetchSlice(SLICE_NAMES[axis], slice[axis]);
        this.contextImages.push({ axis, index: slice[axis], png: payload.png });
      }
    }
    this.draw();
  }

  /* World coordinates are millimeters, matching the streamline payload. */
  private worldBounds(): { center: Vec3; extent: number } {
    const dims = this.store.current.dims;
    const spacing = this.spacing();
    const size: Vec3 = [dims[0] * spacing[0], dims[1] * spacing[1], dims[2] * spacing[2]];
    return {
      center: [size[0] / 2, size[1] / 2, size[2] / 2],
      extent: Math.max(...size) * 1.2,
    };
  }

  private spacing(): Triple {
    return this.spacingOverride ?? [1, 1, 1];
  }

  private spacingOverride: Triple | null = null;

  setSpacing(spacing: Triple): void {
    this.spacingOverride = spacing;
  }

  private draw(): void {
    clear(this.planes);
    clear(this.lines);
    const { center, extent } = this.worldBounds();
    const place = (p: Vec3) => project(this.camera, p, center, WIDTH, HEIGHT, extent);

    const dims = this.store.current.dims;
    const spacing = this.spacing();
    for (const context of this.contextImages) {
      const [u, v] = planeAxes(context.axis);
      /* the oriented image runs against both in-plane axes, so its pixel
       * origin sits at the high end of u and v */
      const origin: Vec3 = [0, 0, 0];
      origin[context.axis] = context.index * spacing[context.axis];
      origin[u] = dims[u] * spacing[u];
      origin[v] = dims[v] * spacing[v];
      const xEnd: Vec3 = [...origin];
      xEnd[u] = 0;
      const yEnd: Vec3 = [...origin];
      yEnd[v] = 0;
      this.planes.append(
        svgEl('image', {
          href: pngDataUri(context.png),
          width: dims[u],
          height: dims[v],
          preserveAspectRatio: 'none',
          opacity: 0.55,
          transform: imagePlaneTransform(place(origin), place(xEnd), place(yEnd), dims[u], dims[v]),
        }),
      );
    }

    for (const line of this.streamlines) {
      if (line.points.length === 0) continue;
      const d = line.points
        .map((p, i) => {
          const at = place(p);
          return `${i === 0 ? 'M' : 'L'}${at.x.toFixed(1)},${at.y.toFixed(1)}`;
        })
        .join(' ');
      this.lines.append(svgEl('path', { d, fill: 'none', class: 'streamline', 'stroke-width': 1 }));
    }
  }
}
