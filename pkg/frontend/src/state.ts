/* Shared view state and the stale-response guard.
 *
 * Panels subscribe to the store and re-render from it; every mutation
 * clamps to the active study's grid so slice indices stay inside the
 * dims and the threshold stays inside the current histogram range
 * (plus its single clear notch one bin above the maximum).
 */

import type { Triple } from './api.js';

export type SplomTarget =
  | { kind: 'voxel'; voxel: Triple }
  | { kind: 'cluster'; clusterId: string };

export interface ViewState {
  studyId: string | null;
  testId: string | null;
  dims: Triple;
  slice: Triple;
  threshold: number | null;
  thresholdRange: [number, number] | null;
  selectedClusters: Map<string, Triple>;
  splomTarget: SplomTarget | null;
  overlayVisible: boolean[];
}

type Listener = (state: ViewState) => void;

export class StateStore {
  private state: ViewState = {
    studyId: null,
    testId: null,
    dims: [1, 1, 1],
    slice: [0, 0, 0],
    threshold: null,
    thresholdRange: null,
    selectedClusters: new Map(),
    splomTarget: null,
    overlayVisible: [],
  };

  private listeners: Listener[] = [];

  get current(): ViewState {
    return this.state;
  }

  subscribe(listener: Listener): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) {
      listener(this.state);
    }
  }

  setStudy(studyId: string, dims: Triple): void {
    this.state.studyId = studyId;
    this.state.dims = dims;
    this.state.slice = dims.map((d) => Math.floor(d / 2)) as Triple;
    this.state.testId = null;
    this.state.threshold = null;
    this.state.thresholdRange = null;
    this.state.selectedClusters = new Map();
    this.state.splomTarget = null;
    this.emit();
  }

  setTest(testId: string): void {
    this.state.testId = testId;
    this.state.threshold = null;
    this.state.thresholdRange = null;
    this.state.selectedClusters = new Map();
    this.emit();
  }

  setSlice(axis: number, index: number): void {
    const next: Triple = [...this.state.slice];
    next[axis] = clampIndex(index, this.state.dims[axis]);
    this.state.slice = next;
    this.emit();
  }

  recenter(voxel: Triple): void {
    this.state.slice = voxel.map((v, axis) => clampIndex(Math.round(v), this.state.dims[axis])) as Triple;
    this.emit();
  }

  /* `range` is the histogram's [first, last] threshold; values may sit one
   * bin above the top so the clear notch can empty the view. */
  setThresholdRange(range: [number, number], binWidth: number): void {
    this.state.thresholdRange = range;
    this.thresholdCeiling = range[1] + binWidth;
    if (this.state.threshold !== null) {
      this.state.threshold = this.clampThreshold(this.state.threshold);
    }
    this.emit();
  }

  private thresholdCeiling = Infinity;

  private clampThreshold(value: number): number {
    const range = this.state.thresholdRange;
    if (range === null) return value;
    return Math.min(Math.max(value, range[0]), this.thresholdCeiling);
  }

  setThreshold(value: number): void {
    this.state.threshold = this.clampThreshold(value);
    this.emit();
  }

  /* Deliberately does not emit: a color assignment repaints only the
   * affected cluster's nodes through the panels' targeted repaint paths,
   * while anything rendered later reads the map from here. */
  setClusterColor(clusterId: string, rgb: Triple): void {
    this.state.selectedClusters.set(clusterId, rgb);
  }

  setSplomTarget(target: SplomTarget): void {
    this.state.splomTarget = target;
    this.emit();
  }
}

function clampIndex(index: number, size: number): number {
  return Math.min(Math.max(index, 0), size - 1);
}

/* Discards responses that are overtaken by a newer request: each wrapped
 * promise resolves to null unless it is still the latest one issued. */
export class Latest {
  private seq = 0;

  async wrap<T>(promise: Promise<T>): Promise<T | null> {
    const ticket = ++this.seq;
    const value = await promise;
    return ticket === this.seq ? value : null;
  }
}
