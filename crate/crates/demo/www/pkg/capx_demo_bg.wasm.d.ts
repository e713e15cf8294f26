/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_analysis_free: (a: number, b: number) => void;
export const analysis_density: (a: number) => number;
export const analysis_json: (a: number) => [number, number];
export const analysis_rgba: (a: number) => [number, number];
export const analyze: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
export const frame_size: (a: number, b: number) => [number, number];
export const similarity_map: (a: number, b: number, c: number, d: number, e: number) => [number, number];
export const synth_frame: (a: number, b: number, c: number, d: number) => [number, number];
export const __externref_table_alloc: () => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
