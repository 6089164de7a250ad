/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demo_free: (a: number, b: number) => void;
export const demo_estimate_abundances: (a: number, b: number, c: number) => [number, number];
export const demo_estimate_rgba: (a: number) => [number, number];
export const demo_new: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number];
export const demo_pixel_spectrum: (a: number, b: number, c: number) => [number, number];
export const demo_size: (a: number) => number;
export const demo_truth_abundances: (a: number, b: number, c: number) => [number, number];
export const demo_truth_rgba: (a: number) => [number, number];
export const demo_unmix: (a: number, b: number, c: number, d: number) => [number, number, number];
export const demo_variants: (a: number, b: number) => [number, number];
export const demo_wavelengths: (a: number) => [number, number];
export const hapke_curve: (a: number, b: number, c: number) => [number, number, number, number];
export const __externref_table_alloc: () => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_start: () => void;
