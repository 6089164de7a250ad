/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    estimate_abundances(row: number, col: number): Float64Array;
    /**
     * Last estimate as RGBA, empty before the first `unmix`.
     */
    estimate_rgba(): Uint8Array;
    /**
     * Square scene of `size` pixels a side. `variability` in `[0, 1]`
     * widens every class's variability range.
     */
    constructor(size: number, bands: number, snr_db: number, variability: number, seed: bigint);
    /**
     * Observed spectrum of pixel (`row`, `col`).
     */
    pixel_spectrum(row: number, col: number): Float64Array;
    size(): number;
    /**
     * True abundances of pixel (`row`, `col`).
     */
    truth_abundances(row: number, col: number): Float64Array;
    truth_rgba(): Uint8Array;
    /**
     * Unmixes the scene against the true variants and returns the abundance
     * RMSE. `algorithm` is one of `fcls`, `mesma`, `sparse-l1`, `sparse-l0`,
     * `elmm`, `plmm`.
     */
    unmix(algorithm: string, max_iters: number): number;
    /**
     * All generated variants of class `class`, concatenated.
     */
    variants(_class: number): Float64Array;
    wavelengths(): Float64Array;
}

/**
 * Reflectance of `n + 1` albedos evenly spaced on `[0, 1]` under the given
 * incidence and emergence cosines.
 */
export function hapke_curve(mu1: number, mu2: number, n: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_estimate_abundances: (a: number, b: number, c: number) => [number, number];
    readonly demo_estimate_rgba: (a: number) => [number, number];
    readonly demo_new: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number];
    readonly demo_pixel_spectrum: (a: number, b: number, c: number) => [number, number];
    readonly demo_size: (a: number) => number;
    readonly demo_truth_abundances: (a: number, b: number, c: number) => [number, number];
    readonly demo_truth_rgba: (a: number) => [number, number];
    readonly demo_unmix: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly demo_variants: (a: number, b: number) => [number, number];
    readonly demo_wavelengths: (a: number) => [number, number];
    readonly hapke_curve: (a: number, b: number, c: number) => [number, number, number, number];
    readonly __externref_table_alloc: () => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
