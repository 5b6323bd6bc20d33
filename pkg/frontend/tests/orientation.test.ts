import { describe, expect, it } from 'vitest';

import type { Triple } from '../src/api.js';
import { SLICE_NAMES, imageSize, pixelToVoxel, planeAxes, sliceAxis, voxelToPixel } from '../src/orientation.js';

const DIMS: Triple = [10, 12, 8];

describe('slice plane conventions', () => {
  it('names the grid axes sagittal, coronal, axial in order', () => {
    expect(SLICE_NAMES).toEqual(['sagittal', 'coronal', 'axial']);
    expect(sliceAxis('sagittal')).toBe(0);
    expect(sliceAxis('axial')).toBe(2);
  });

  it('spans image columns with the lower remaining axis', () => {
    expect(planeAxes(0)).toEqual([1, 2]);
    expect(planeAxes(1)).toEqual([0, 2]);
    expect(planeAxes(2)).toEqual([0, 1]);
  });

  it('sizes the image from the in-plane dims times the scale', () => {
    expect(imageSize(2, DIMS, 4)).toEqual({ width: 40, height: 48 });
    expect(imageSize(0, DIMS, 2)).toEqual({ width: 24, height: 16 });
  });
});

describe('pixel to voxel mapping', () => {
  it('puts the highest i at the image left on axial slices (radiological)', () => {
    /* axial: columns span axis 0 reversed, so pixel column 0 is i = 9 */
    expect(pixelToVoxel(2, 4, 1, 1, DIMS, 4)).toEqual([9, 11, 4]);
    /* the far corner is i = 0, j = 0 */
    expect(pixelToVoxel(2, 4, 39, 47, DIMS, 4)).toEqual([0, 0, 4]);
  });

  it('keeps the slice axis fixed at the given index', () => {
    const voxel = pixelToVoxel(1, 7, 10, 10, DIMS, 4);
    expect(voxel![1]).toBe(7);
  });

  it('maps every pixel of one voxel block to the same voxel', () => {
    const scale = 4;
    const base = pixelToVoxel(2, 4, 8, 12, DIMS, scale);
    expect(pixelToVoxel(2, 4, 11, 15, DIMS, scale)).toEqual(base);
    expect(pixelToVoxel(2, 4, 12, 15, DIMS, scale)).not.toEqual(base);
  });

  it('returns null outside the image', () => {
    expect(pixelToVoxel(2, 4, -1, 0, DIMS, 4)).toBeNull();
    expect(pixelToVoxel(2, 4, 40, 0, DIMS, 4)).toBeNull();
    expect(pixelToVoxel(2, 4, 0, 48, DIMS, 4)).toBeNull();
  });

  it('round-trips with voxelToPixel at pixel-block centers', () => {
    const scale = 4;
    for (const axis of [0, 1, 2]) {
      const voxel: Triple = [3, 5, 2];
      const { x, y } = voxelToPixel(axis, voxel, DIMS, scale);
      const back = pixelToVoxel(axis, voxel[axis], x, y, DIMS, scale);
      expect(back).toEqual(voxel);
    }
  });

  it('moves the pixel left when the column-axis voxel coordinate grows', () => {
    const lowI = voxelToPixel(2, [2, 5, 4], DIMS, 4);
    const highI = voxelToPixel(2, [7, 5, 4], DIMS, 4);
    expect(highI.x).toBeLessThan(lowI.x);
  });
});
