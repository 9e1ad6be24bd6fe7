/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demo_free: (a: number, b: number) => void;
export const demo_ablate: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number];
export const demo_confidence: (a: number, b: number, c: number) => [number, number];
export const demo_new: (a: number, b: bigint) => [number, number, number];
export const weibull_explorer: (a: number, b: number, c: number, d: number, e: bigint) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
