/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_simulation_free: (a: number, b: number) => void;
export const layout: (a: number, b: number) => [number, number, number, number];
export const simulation_new: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number];
export const simulation_reset: (a: number, b: bigint) => [number, number];
export const simulation_snapshot: (a: number) => [number, number, number, number];
export const simulation_step: (a: number, b: number) => [number, number, number, number];
export const tspDemo: (a: number, b: number, c: number, d: bigint) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
