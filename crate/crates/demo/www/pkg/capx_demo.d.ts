/* tslint:disable */
/* eslint-disable */

/**
 * Result of [`analyze`]: the annotated frame and the density result.
 */
export class Analysis {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly density: number;
    readonly json: string;
    readonly rgba: Uint8Array;
}

/**
 * Runs the full pipeline with the built-in intensity model.
 */
export function analyze(seed: number, index: number, width: number, height: number, threshold: number): Analysis;

/**
 * Frame size after clamping, as `[width, height]`.
 */
export function frame_size(width: number, height: number): Uint32Array;

/**
 * SSIM against the blurred background as a heat map; pixels below
 * `threshold` (the candidate mask) are tinted magenta.
 */
export function similarity_map(seed: number, index: number, width: number, height: number, threshold: number): Uint8Array;

/**
 * The synthetic frame as RGBA.
 */
export function synth_frame(seed: number, index: number, width: number, height: number): Uint8Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_analysis_free: (a: number, b: number) => void;
    readonly analysis_density: (a: number) => number;
    readonly analysis_json: (a: number) => [number, number];
    readonly analysis_rgba: (a: number) => [number, number];
    readonly analyze: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
    readonly frame_size: (a: number, b: number) => [number, number];
    readonly similarity_map: (a: number, b: number, c: number, d: number, e: number) => [number, number];
    readonly synth_frame: (a: number, b: number, c: number, d: number) => [number, number];
    readonly __externref_table_alloc: () => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_table_dealloc: (a: number) => void;
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
