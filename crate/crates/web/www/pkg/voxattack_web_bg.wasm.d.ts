/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_curvesview_free: (a: number, b: number) => void;
export const __wbg_spectrogramview_free: (a: number, b: number) => void;
export const backendCurves: (a: number, b: number, c: number, d: bigint) => [number, number, number];
export const curvesview_cosine_eer: (a: number) => number;
export const curvesview_cosine_far: (a: number) => [number, number];
export const curvesview_cosine_frr: (a: number) => [number, number];
export const curvesview_plda_eer: (a: number) => number;
export const curvesview_plda_far: (a: number) => [number, number];
export const curvesview_plda_frr: (a: number) => [number, number];
export const llrGrid: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const maskedSpectrogram: (a: number, b: number, c: number, d: number, e: number, f: bigint) => [number, number, number];
export const spectrogramview_bins: (a: number) => number;
export const spectrogramview_frames: (a: number) => number;
export const spectrogramview_kept: (a: number) => [number, number];
export const spectrogramview_values: (a: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
