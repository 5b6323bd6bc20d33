import type { Triple } from './api.js';

/* Tooltip numbers are shown with three decimals, matching the service's
 * precision contract for echoed statistics. */
export function fmt3(value: number): string {
  if (Number.isNaN(value)) return 'n/a';
  return value.toFixed(3);
}

export function rgbCss(rgb: Triple | number[]): string {
  return `rgb(${rgb[0]}, ${rgb[1]}, ${rgb[2]})`;
}

export function rgbToHex(rgb: Triple | number[]): string {
  return '#' + rgb.map((c) => c.toString(16).padStart(2, '0')).join('');
}
