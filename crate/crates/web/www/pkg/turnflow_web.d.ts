/* tslint:disable */
/* eslint-disable */

/**
 * Runs the simulator on a builtin scenario with every entry held at `fraction` of capacity.
 * Returns JSON with times, blocked vehicles and cumulative throughput per exit.
 */
export function ctm_run(scenario: string, fraction: number, proportional_merge: boolean): string;

/**
 * Vehicle-count field `M(t, x)` of a one-lane link on an `nt x nx` grid, row-major by time.
 * Points no condition reaches are NaN.
 */
export function moskowitz_field(free_speed: number, critical_density: number, jam_density: number, length: number, densities: Float64Array, q_in: Float64Array, q_out: Float64Array, step: number, nt: number, nx: number): Float64Array;

/**
 * Largest `x >= 0` with `P(a x <= rhs) >= 1 - alpha` for every coefficient `a` with the given
 * mean and standard deviation. Returns `[kappa, bound]`; the bound is infinite when the
 * robust coefficient is not positive.
 */
export function soc_bound(mean: number, std_dev: number, rhs: number, alpha: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly ctm_run: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly moskowitz_field: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number, j: number, k: number, l: number, m: number) => [number, number, number, number];
    readonly soc_bound: (a: number, b: number, c: number, d: number) => [number, number, number, number];
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
