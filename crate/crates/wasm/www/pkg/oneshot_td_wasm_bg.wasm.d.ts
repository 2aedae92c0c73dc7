/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_curves_free: (a: number, b: number) => void;
export const boundCurves: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
export const consensusCurves: (a: number, b: number, c: number, d: number) => [number, number, number];
export const curves_first: (a: number) => [number, number];
export const curves_second: (a: number) => [number, number];
export const curves_xs: (a: number) => [number, number];
export const gridworldCurves: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
