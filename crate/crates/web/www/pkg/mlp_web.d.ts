/* tslint:disable */
/* eslint-disable */

/**
 * Relative L²-error against Gaussian draws for `n = 1..=n_max` (M = n).
 * `reference` is `paper-mlp`, `paper-ds` or `self:N[:RUNS]`.
 */
export function convergence(example: string, d: number, n_max: number, runs: number, seed: number, reference: string): string;

/**
 * Closed-form randomness cost of one `V_{n,M}` evaluation in dimension
 * `d`. `m = 0` means `M = n`. Counts are decimal strings (they exceed the
 * exact range of JS numbers for large n).
 */
export function cost_table(d: number, n_max: number, m: number): string;

/**
 * Independent realizations of `V_{n,M}(t, x)` at the example's default
 * evaluation point.
 */
export function estimate(example: string, d: number, n: number, m: number, t: number, runs: number, seed: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly convergence: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number, number];
    readonly cost_table: (a: number, b: number, c: number) => [number, number, number, number];
    readonly estimate: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
