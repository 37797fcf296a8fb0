/* tslint:disable */
/* eslint-disable */

/**
 * Mean-field phase labels on a `side x side` grid over
 * `epsilon in (0, epsilon_max]` and `detuning in [-detuning_max, detuning_max]`.
 */
export function phase_map(gamma_plus: number, gamma_minus: number, epsilon_max: number, detuning_max: number, side: number, t_end: number): string;

/**
 * All Liouvillian eigenvalues at `n_spins`, with the spectral gap.
 */
export function spectrum_cloud(detuning: number, epsilon: number, gamma_plus: number, gamma_minus: number, n_spins: number): string;

/**
 * Mean-field trajectory from the polar angle `theta0` at `phi = 0`.
 */
export function trajectory(detuning: number, epsilon: number, gamma_plus: number, gamma_minus: number, theta0: number, t_end: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly phase_map: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly spectrum_cloud: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly trajectory: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
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
