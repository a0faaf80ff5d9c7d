/* tslint:disable */
/* eslint-disable */

export class CurvesView {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    cosine_eer(): number;
    cosine_far(): Float64Array;
    cosine_frr(): Float64Array;
    plda_eer(): number;
    plda_far(): Float64Array;
    plda_frr(): Float64Array;
}

export class SpectrogramView {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    bins(): number;
    frames(): number;
    kept(): Uint8Array;
    values(): Float64Array;
}

export function backendCurves(between: number, within: number, noise: number, seed: bigint): CurvesView;

export function llrGrid(between: number, within: number, lo: number, hi: number, n: number): Float64Array;

export function maskedSpectrogram(f0: number, time_masks: number, max_time_width: number, freq_masks: number, max_freq_width: number, seed: bigint): SpectrogramView;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_curvesview_free: (a: number, b: number) => void;
    readonly __wbg_spectrogramview_free: (a: number, b: number) => void;
    readonly backendCurves: (a: number, b: number, c: number, d: bigint) => [number, number, number];
    readonly curvesview_cosine_eer: (a: number) => number;
    readonly curvesview_cosine_far: (a: number) => [number, number];
    readonly curvesview_cosine_frr: (a: number) => [number, number];
    readonly curvesview_plda_eer: (a: number) => number;
    readonly curvesview_plda_far: (a: number) => [number, number];
    readonly curvesview_plda_frr: (a: number) => [number, number];
    readonly llrGrid: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly maskedSpectrogram: (a: number, b: number, c: number, d: number, e: number, f: bigint) => [number, number, number];
    readonly spectrogramview_bins: (a: number) => number;
    readonly spectrogramview_frames: (a: number) => number;
    readonly spectrogramview_kept: (a: number) => [number, number];
    readonly spectrogramview_values: (a: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
