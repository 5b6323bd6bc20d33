/* Pixel/voxel mapping for server-rendered slices.
 *
 * The grid is indexed (i, j, k) with +i toward the subject's right, +j
 * anterior, +k superior. The server orients every slice by transposing
 * the two in-plane axes and flipping both, which puts the subject's
 * right (anterior, for sagittal slices) at the image's left and
 * superior (anterior, for axial) at the top. The mapping here is the
 * exact inverse, so crosshairs and click targets land on the voxel the
 * server drew at that pixel. Images arrive pre-oriented and are never
 * flipped client-side; the burned-in R/L labels stay authoritative.
 */

import type { Triple } from './api.js';

export const SLICE_NAMES = ['sagittal', 'coronal', 'axial'] as const;
export type SliceName = (typeof SLICE_NAMES)[number];

export function sliceAxis(name: SliceName): number {
  return SLICE_NAMES.indexOf(name);
}

/* The two in-plane grid axes, ascending: the first spans image columns,
 * the second spans image rows (both reversed). */
export function planeAxes(axis: number): [number, number] {
  const axes = [0, 1, 2].filter((a) => a !== axis);
  return [axes[0], axes[1]];
}

export function imageSize(axis: number, dims: Triple, scale: number): { width: number; height: number } {
  const [u, v] = planeAxes(axis);
  return { width: dims[u] * scale, height: dims[v] * scale };
}

export function pixelToVoxel(
  axis: number,
  sliceIndex: number,
  xPx: number,
  yPx: number,
  dims: Triple,
  scale: number,
): Triple | null {
  const [u, v] = planeAxes(axis);
  const col = Math.floor(xPx / scale);
  const row = Math.floor(yPx / scale);
  if (col < 0 || col >= dims[u] || row < 0 || row >= dims[v]) {
    return null;
  }
  const voxel: Triple = [0, 0, 0];
  voxel[axis] = sliceIndex;
  voxel[u] = dims[u] - 1 - col;
  voxel[v] = dims[v] - 1 - row;
  return voxel;
}

/* Center of a voxel's pixel block on the oriented image. */
export function voxelToPixel(axis: number, voxel: Triple, dims: Triple, scale: number): { x: number; y: number } {
  const [u, v] = planeAxes(axis);
  return {
    x: (dims[u] - 1 - voxel[u] + 0.5) * scale,
    y: (dims[v] - 1 - voxel[v] + 0.5) * scale,
  };
}
