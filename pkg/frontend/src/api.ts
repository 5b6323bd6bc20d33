/* Typed client for the tenstat HTTP service.
 *
 * Every interface here mirrors one service payload field for field; the
 * UI never derives statistics of its own, it re-displays these values.
 */

export type Triple = [number, number, number];

export interface StudyCard {
  id: string;
  dims: Triple;
  spacing_mm: Triple;
  mask_voxels: number;
  has_background: boolean;
  group_names: [string, string];
  group_sizes: [number, number];
  subjects: { id: string; group: string }[];
  axes: string[];
}

export interface TestConfig {
  axes: string[];
  use_tfce: boolean;
  smoothing_sigma: number;
  alpha: number;
}

export interface TestCard {
  id: string;
  study_id: string;
  axes: string[];
  alpha: number;
  use_tfce: boolean;
  smoothing_sigma: number;
  statistic: string;
  surface: string;
  surface_max: number;
  default_threshold: number;
  degenerate_voxels: number;
  layers: string[];
}

export interface SlicePayload {
  axis: string;
  index: number;
  n_slices: number;
  window: [number, number];
  shape: [number, number];
  scale: number;
  png: string;
}

export interface HistogramPayload {
  test_id: string;
  surface: string;
  thresholds: number[];
  counts: number[];
}

export interface ClusterRow {
  id: string;
  voxels: number;
  volume_mm3: number;
  cog_voxel: Triple;
  cog_mm: Triple;
  peak_stat: number;
  color: Triple | null;
}

export interface ThresholdPayload {
  test_id: string;
  mask_id: string;
  surface: string;
  threshold: number;
  connectivity: number;
  n_voxels: number;
  clusters: ClusterRow[];
}

export interface SplomSubject {
  id: string;
  group: string;
  coordinates: number[];
}

export interface SplomPayload {
  location: string;
  axes: string[];
  subjects: SplomSubject[];
  valid_axes: boolean[];
  excluded_voxels: number[];
  n_voxels: number;
  pearson: { axes: [string, string]; r: number }[];
  axis_tests: { axis: string; t: number; p: number }[];
}

export interface GlyphSubject {
  id: string;
  group: string;
  matrix: number[][];
  eigenvalues: Triple;
  /* row r is the unit eigenvector of eigenvalues[r] */
  eigenvectors: number[][];
  norm: number;
  fa: number;
  mode: number;
  degenerate: boolean;
}

export interface GlyphsPayload {
  study_id: string;
  voxel: Triple;
  spacing_mm: Triple;
  group_names: [string, string];
  subjects: GlyphSubject[];
}

export interface TractoParams {
  step_size_voxels?: number;
  max_steps?: number;
  fa_stop?: number;
  angle_stop_degrees?: number;
  seeds_per_voxel?: number;
  integration?: string;
  subject?: string | null;
}

export interface TractoCard {
  id: string;
  study_id: string;
  mask_id: string;
  n_streamlines: number;
  n_points: number;
}

export interface CompareMask {
  name: string;
  letter: string;
  color: Triple;
  voxels: number;
  visible: boolean;
}

export interface ComparePayload {
  id: string;
  study_id: string;
  masks: CompareMask[];
  regions: Record<string, number>;
  region_colors: Record<string, Triple>;
}

export interface CompareSlicePayload {
  id: string;
  axis: string;
  index: number;
  n_slices: number;
  visible: string;
  scale: number;
  png: string;
}

export interface JobCard {
  id: string;
  kind: string;
  study_id: string;
  params: Record<string, unknown>;
  seed: number;
  status: 'queued' | 'running' | 'done' | 'failed' | 'canceled';
  progress: number;
  result: string | null;
  error: string | null;
}

export interface ResultCard {
  id: string;
  study_id: string;
  params: Record<string, unknown>;
  n_permutations: number;
  seed: number;
  min_corrected_p: number | null;
  null_max: number[];
  layers: string[];
}

export interface Api {
  postStudy(manifest: Record<string, unknown>): Promise<StudyCard>;
  getStudy(id: string): Promise<StudyCard>;
  postTest(studyId: string, config: TestConfig): Promise<TestCard>;
  getTest(id: string): Promise<TestCard>;
  getTestSlice(testId: string, axis: string, index: number, layer: string, scale: number): Promise<SlicePayload>;
  getHistogram(testId: string, bins: number): Promise<HistogramPayload>;
  postThreshold(testId: string, value: number, connectivity: number): Promise<ThresholdPayload>;
  postClusterColor(clusterId: string, rgb: string): Promise<{ id: string; rgb: Triple }>;
  getClusterSplom(clusterId: string): Promise<SplomPayload>;
  getVoxelSplom(studyId: string, voxel: Triple, smoothingSigma: number): Promise<SplomPayload>;
  getVoxelGlyphs(studyId: string, voxel: Triple): Promise<GlyphsPayload>;
  postTracto(studyId: string, maskId: string, params: TractoParams): Promise<TractoCard>;
  getTractoBytes(tractId: string): Promise<ArrayBuffer>;
  postCompare(maskIds: string[], colors: string[], names?: string[]): Promise<ComparePayload>;
  getCompareSlice(compareId: string, axis: string, index: number, visible: string | null, scale: number): Promise<CompareSlicePayload>;
  postPermutationJob(studyId: string, body: { axes: string[]; use_tfce: boolean; smoothing_sigma: number; n: number; seed: number }): Promise<JobCard>;
  getJob(id: string): Promise<JobCard>;
  deleteJob(id: string): Promise<JobCard>;
  getResult(id: string): Promise<ResultCard>;
  getResultSlice(resultId: string, axis: string, index: number, layer: string, scale: number): Promise<SlicePayload>;
}

/* Server-reported failure. `message` carries the service's detail text
 * verbatim so panels can render exactly what the server said. */
export class ApiError extends Error {
  readonly status: number;

  constructor(status: number, message: string) {
    super(message);
    this.name = 'ApiError';
    this.status = status;
  }
}

type ValidationItem = { field: string; message: string };

function detailText(detail: unknown): string {
  if (typeof detail === 'string') return detail;
  if (Array.isArray(detail)) {
    return (detail as ValidationItem[])
      .map((item) => `${item.field}: ${item.message}`)
      .join('; ');
  }
  return JSON.stringify(detail);
}

export class HttpApi implements Api {
  constructor(readonly baseUrl: string) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await fetch(this.baseUrl + path, {
      method,
      headers: body === undefined ? undefined : { 'content-type': 'application/json' },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) {
      let detail: unknown = response.statusText;
      try {
        detail = (await response.json()).detail;
      } catch {
        /* non-JSON error body; fall back to the status text */
      }
      throw new ApiError(response.status, detailText(detail));
    }
    return (await response.json()) as T;
  }

  private async binary(path: string): Promise<ArrayBuffer> {
    const response = await fetch(this.baseUrl + path);
    if (!response.ok) {
      throw new ApiError(response.status, response.statusText);
    }
    return response.arrayBuffer();
  }

  postStudy(manifest: Record<string, unknown>): Promise<StudyCard> {
    return this.request('POST', '/studies', { manifest });
  }

  getStudy(id: string): Promise<StudyCard> {
    return this.request('GET', `/studies/${id}`);
  }

  postTest(studyId: string, config: TestConfig): Promise<TestCard> {
    return this.request('POST', `/studies/${studyId}/tests`, config);
  }

  getTest(id: string): Promise<TestCard> {
    return this.request('GET', `/tests/${id}`);
  }

  getTestSlice(testId: string, axis: string, index: number, layer: string, scale: number): Promise<SlicePayload> {
    return this.request('GET', `/tests/${testId}/slice?axis=${axis}&index=${index}&layer=${layer}&scale=${scale}`);
  }

  getHistogram(testId: string, bins: number): Promise<HistogramPayload> {
    return this.request('GET', `/tests/${testId}/histogram?bins=${bins}`);
  }

  postThreshold(testId: string, value: number, connectivity: number): Promise<ThresholdPayload> {
    return this.request('POST', `/tests/${testId}/threshold`, { value, connectivity });
  }

  postClusterColor(clusterId: string, rgb: string): Promise<{ id: string; rgb: Triple }> {
    return this.request('POST', `/clusters/${clusterId}/color`, { rgb });
  }

  getClusterSplom(clusterId: string): Promise<SplomPayload> {
    return this.request('GET', `/clusters/${clusterId}/splom`);
  }

  getVoxelSplom(studyId: string, voxel: Triple, smoothingSigma: number): Promise<SplomPayload> {
    const [i, j, k] = voxel;
    return this.request('GET', `/studies/${studyId}/voxel/${i}/${j}/${k}/splom?smoothing_sigma=${smoothingSigma}`);
  }

  getVoxelGlyphs(studyId: string, voxel: Triple): Promise<GlyphsPayload> {
    const [i, j, k] = voxel;
    return this.request('GET', `/studies/${studyId}/voxel/${i}/${j}/${k}/glyphs`);
  }

  postTracto(studyId: string, maskId: string, params: TractoParams): Promise<TractoCard> {
    return this.request('POST', `/studies/${studyId}/tracto`, { mask_id: maskId, params });
  }

  getTractoBytes(tractId: string): Promise<ArrayBuffer> {
    return this.binary(`/tracto/${tractId}`);
  }

  postCompare(maskIds: string[], colors: string[], names?: string[]): Promise<ComparePayload> {
    return this.request('POST', '/compare', { mask_ids: maskIds, colors, names });
  }

  getCompareSlice(compareId: string, axis: string, index: number, visible: string | null, scale: number): Promise<CompareSlicePayload> {
    const shown = visible === null ? '' : `&visible=${visible}`;
    return this.request('GET', `/compare/${compareId}/slice?axis=${axis}&index=${index}${shown}&scale=${scale}`);
  }

  postPermutationJob(
    studyId: string,
    body: { axes: string[]; use_tfce: boolean; smoothing_sigma: number; n: number; seed: number },
  ): Promise<JobCard> {
    return this.request('POST', `/studies/${studyId}/jobs/permutation`, body);
  }

  getJob(id: string): Promise<JobCard> {
    return this.request('GET', `/jobs/${id}`);
  }

  deleteJob(id: string): Promise<JobCard> {
    return this.request('DELETE', `/jobs/${id}`);
  }

  getResult(id: string): Promise<ResultCard> {
    return this.request('GET', `/results/${id}`);
  }

  getResultSlice(resultId: string, axis: string, index: number, layer: string, scale: number): Promise<SlicePayload> {
    return this.request('GET', `/results/${resultId}/slice?axis=${axis}&index=${index}&layer=${layer}&scale=${scale}`);
  }
}
