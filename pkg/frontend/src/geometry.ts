/* 3-D support for the glyph and tract views: a shared orbit camera, an
 * orthographic projector, superquadric glyph meshes built from each
 * subject's eigensystem, and the streamline file parser.
 *
 * Everything renders to SVG via `project`, so views stay testable
 * without a GL context and the painter's sort keeps faces ordered.
 */

import type { GlyphSubject, Triple } from './api.js';

export type Vec3 = Triple;

export function sub(a: Vec3, b: Vec3): Vec3 {
  return [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
}

export function scale(a: Vec3, s: number): Vec3 {
  return [a[0] * s, a[1] * s, a[2] * s];
}

export function dot(a: Vec3, b: Vec3): number {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

export function cross(a: Vec3, b: Vec3): Vec3 {
  return [
    a[1] * b[2] - a[2] * b[1],
    a[2] * b[0] - a[0] * b[2],
    a[0] * b[1] - a[1] * b[0],
  ];
}

export function norm(a: Vec3): number {
  return Math.hypot(a[0], a[1], a[2]);
}

export function normalize(a: Vec3): Vec3 {
  const n = norm(a);
  return n === 0 ? [0, 0, 0] : scale(a, 1 / n);
}

/* Orbit pose shared by coupled subwindows: yaw about the world z axis,
 * then pitch about the view x axis, orthographic, with a zoom factor.
 * Rotating any one view mutates the single camera instance every other
 * view renders from.
 */
export class OrbitCamera {
  yaw: number;
  pitch: number;
  zoom: number;

  private readonly home: { yaw: number; pitch: number; zoom: number };
  private listeners: (() => void)[] = [];

  constructor(yaw = 0.6, pitch = -0.4, zoom = 1) {
    this.yaw = yaw;
    this.pitch = pitch;
    this.zoom = zoom;
    this.home = { yaw, pitch, zoom };
  }

  onChange(listener: () => void): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) listener();
  }

  rotate(dYaw: number, dPitch: number): void {
    this.yaw += dYaw;
    this.pitch = Math.min(Math.max(this.pitch + dPitch, -Math.PI / 2), Math.PI / 2);
    this.emit();
  }

  scaleZoom(factor: number): void {
    this.zoom = Math.min(Math.max(this.zoom * factor, 0.1), 20);
    this.emit();
  }

  reset(): void {
    this.yaw = this.home.yaw;
    this.pitch = this.home.pitch;
    this.zoom = this.home.zoom;
    this.emit();
  }

  get pose(): { yaw: number; pitch: number; zoom: number } {
    return { yaw: this.yaw, pitch: this.pitch, zoom: this.zoom };
  }

  /* World to view: x right, y up, z toward the viewer. */
  toView(p: Vec3): Vec3 {
    const cy = Math.cos(this.yaw);
    const sy = Math.sin(this.yaw);
    const cp = Math.cos(this.pitch);
    const sp = Math.sin(this.pitch);
    const x = cy * p[0] + sy * p[1];
    const y = -sy * p[0] + cy * p[1];
    const vy = cp * y - sp * p[2];
    const vz = sp * y + cp * p[2];
    return [x, vy, vz];
  }
}

export interface Projected {
  x: number;
  y: number;
  depth: number;
}

/* Orthographic projection of a world point into a width x height viewport
 * centered on `center`, with `unitsPerViewport` world units spanning the
 * smaller viewport dimension at zoom 1. */
export function project(
  camera: OrbitCamera,
  p: Vec3,
  center: Vec3,
  width: number,
  height: number,
  unitsPerViewport: number,
): Projected {
  const view = camera.toView(sub(p, center));
  const pxPerUnit = (Math.min(width, height) / unitsPerViewport) * camera.zoom;
  return {
    x: width / 2 + view[0] * pxPerUnit,
    y: height / 2 - view[1] * pxPerUnit,
    depth: view[2],
  };
}

/* Exponent sharpness of the superquadric profile: gamma = 3 keeps nearly
 * isotropic tensors rounded while fully anisotropic ones develop edges. */
export const SUPERQUADRIC_GAMMA = 3;

const LATITUDE_SEGMENTS = 12;
const LONGITUDE_SEGMENTS = 18;

export interface Face {
  points: Vec3[];
  normal: Vec3;
}

function signedPow(w: number, e: number): number {
  return Math.sign(w) * Math.abs(w) ** e;
}

/* Superquadric exponents from the anisotropy invariants. `mode` blends
 * between the planar (-1) and linear (+1) archetypes; `fa` drives how far
 * the shape departs from an ellipsoid. At fa = 0 both exponents are 1
 * (an ellipsoid); a linear tensor sharpens the profile along the
 * principal axis, a planar one sharpens the cross-section. */
export function superquadricExponents(fa: number, mode: number): { around: number; along: number } {
  const toLinear = (mode + 1) / 2;
  const around = (1 - fa * (1 - toLinear)) ** SUPERQUADRIC_GAMMA;
  const along = (1 - fa * toLinear) ** SUPERQUADRIC_GAMMA;
  return { around, along };
}

/* Quad mesh of one subject's glyph in world space. The glyph sits at the
 * origin with radii proportional to the eigenvalues along their
 * eigenvectors, so comparing subwindows compares physical tensor size:
 * `radiusScale` converts an eigenvalue into world units and must be
 * shared across all subjects in a grid. Degenerate tensors fall back to
 * an ellipsoid (both exponents 1). */
export function glyphMesh(subject: GlyphSubject, radiusScale: number): Face[] {
  const { around, along } = subject.degenerate
    ? { around: 1, along: 1 }
    : superquadricExponents(subject.fa, subject.mode);
  const radii = subject.eigenvalues.map((v) => Math.max(v, 0) * radiusScale);
  const axes = subject.eigenvectors as [Vec3, Vec3, Vec3];

  const vertex = (u: number, v: number): Vec3 => {
    const cu = Math.cos(u);
    const su = Math.sin(u);
    /* principal axis carries the latitude profile */
    const c1 = radii[0] * signedPow(su, along);
    const ring = signedPow(cu, along);
    const c2 = radii[1] * ring * signedPow(Math.cos(v), around);
    const c3 = radii[2] * ring * signedPow(Math.sin(v), around);
    return [
      c1 * axes[0][0] + c2 * axes[1][0] + c3 * axes[2][0],
      c1 * axes[0][1] + c2 * axes[1][1] + c3 * axes[2][1],
      c1 * axes[0][2] + c2 * axes[1][2] + c3 * axes[2][2],
    ];
  };

  const faces: Face[] = [];
  for (let lat = 0; lat < LATITUDE_SEGMENTS; lat++) {
    const u0 = -Math.PI / 2 + (Math.PI * lat) / LATITUDE_SEGMENTS;
    const u1 = -Math.PI / 2 + (Math.PI * (lat + 1)) / LATITUDE_SEGMENTS;
    for (let lon = 0; lon < LONGITUDE_SEGMENTS; lon++) {
      const v0 = -Math.PI + (2 * Math.PI * lon) / LONGITUDE_SEGMENTS;
      const v1 = -Math.PI + (2 * Math.PI * (lon + 1)) / LONGITUDE_SEGMENTS;
      const points = [vertex(u0, v0), vertex(u1, v0), vertex(u1, v1), vertex(u0, v1)];
      const normal = normalize(cross(sub(points[1], points[0]), sub(points[3], points[0])));
      faces.push({ points, normal });
    }
  }
  return faces;
}

/* Principal-direction color: |e1| mapped to RGB, the usual DTI scheme. */
export function principalColor(subject: GlyphSubject): Triple {
  if (subject.degenerate) {
    return [128, 128, 128];
  }
  const e1 = subject.eigenvectors[0];
  return [
    Math.round(Math.abs(e1[0]) * 255),
    Math.round(Math.abs(e1[1]) * 255),
    Math.round(Math.abs(e1[2]) * 255),
  ] as Triple;
}

const LIGHT_DIR: Vec3 = normalize([0.4, 0.5, 1]);

/* Flat Lambert shade of a face normal, evaluated in view space so the
 * lighting follows the camera. */
export function shade(camera: OrbitCamera, normal: Vec3, base: Triple): Triple {
  const viewNormal = camera.toView(normal);
  const lambert = Math.abs(dot(viewNormal, LIGHT_DIR));
  const level = 0.35 + 0.65 * lambert;
  return [
    Math.round(base[0] * level),
    Math.round(base[1] * level),
    Math.round(base[2] * level),
  ] as Triple;
}

export interface Streamline {
  points: Vec3[];
}

const STREAMLINE_MAGIC = 0x4c545354; /* "TSTL" little-endian */

export function parseStreamlines(buffer: ArrayBuffer): Streamline[] {
  const view = new DataView(buffer);
  if (buffer.byteLength < 12 || view.getUint32(0, true) !== STREAMLINE_MAGIC) {
    throw new Error('not a streamline file: bad magic');
  }
  const version = view.getUint32(4, true);
  if (version !== 1) {
    throw new Error(`unsupported streamline file version ${version}`);
  }
  const count = view.getUint32(8, true);
  const lines: Streamline[] = [];
  let offset = 12;
  for (let line = 0; line < count; line++) {
    if (offset + 4 > buffer.byteLength) {
      throw new Error(`truncated streamline file at line ${line}`);
    }
    const n = view.getUint32(offset, true);
    offset += 4;
    if (offset + 12 * n > buffer.byteLength) {
      throw new Error(`truncated streamline file at line ${line}`);
    }
    const points: Vec3[] = [];
    for (let p = 0; p < n; p++) {
      points.push([
        view.getFloat32(offset, true),
        view.getFloat32(offset + 4, true),
        view.getFloat32(offset + 8, true),
      ]);
      offset += 12;
    }
    lines.push({ points });
  }
  return lines;
}

/* SVG transform matrix mapping an image of `width` x `height` pixels onto
 * the parallelogram spanned by the projections of a 3-D rectangle's
 * corners (origin, +x edge end, +y edge end). Under an orthographic
 * camera a rectangle projects to exactly this parallelogram, which lets
 * server-rendered slices sit as context planes in the 3-D views. */
export function imagePlaneTransform(
  origin: Projected,
  xEnd: Projected,
  yEnd: Projected,
  width: number,
  height: number,
): string {
  const a = (xEnd.x - origin.x) / width;
  const b = (xEnd.y - origin.y) / width;
  const c = (yEnd.x - origin.x) / height;
  const d = (yEnd.y - origin.y) / height;
  return `matrix(${a} ${b} ${c} ${d} ${origin.x} ${origin.y})`;
}
