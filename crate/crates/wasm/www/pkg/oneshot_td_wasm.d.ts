/* tslint:disable */
/* eslint-disable */

/**
 * An x axis with two y series.
 */
export class Curves {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly first: Float64Array;
    readonly second: Float64Array;
    readonly xs: Float64Array;
}

export function boundCurves(gamma: number, alpha: number, horizon: number, max_agents: number, seed: number): Curves;

export function consensusCurves(nodes: number, p: number, rounds: number, seed: number): Curves;

export function gridworldCurves(size: number, agents: number, horizon: number, alpha: number, seed: number): Curves;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_curves_free: (a: number, b: number) => void;
    readonly boundCurves: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
    readonly consensusCurves: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly curves_first: (a: number) => [number, number];
    readonly curves_second: (a: number) => [number, number];
    readonly curves_xs: (a: number) => [number, number];
    readonly gridworldCurves: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
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
