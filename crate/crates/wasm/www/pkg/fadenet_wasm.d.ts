/* tslint:disable */
/* eslint-disable */

/**
 * A small FNN trained in the page on the distance dataset.
 */
export class FnnPlayground {
    free(): void;
    [Symbol.dispose](): void;
    distances(): Float64Array;
    epoch(): bigint;
    /**
     * ScaledPE and average overlapped area of the current weights.
     */
    evaluate(): string;
    constructor(n_per_distance: number, layers: number, units: number, seed: bigint);
    /**
     * Model output and genuine training targets (log domain) for one
     * distance category, with quantiles on an even grid.
     */
    sample(category: number, n: number): string;
    /**
     * Runs `epochs` more epochs and returns the validation loss history.
     */
    train(epochs: number): Float64Array;
}

/**
 * Received power at `distance` metres with shape `m`, in the log domain
 * `log10(P·1e14 + 2)`: analytic density, histogram of `n` quantile-sampled
 * draws, and the closed-form and sample means in watts.
 */
export function channel_curves(m: number, distance: number, n: number, seed: bigint): string;

/**
 * Overlapped area of two Gaussian samples, with both density estimates.
 */
export function overlap(mean_a: number, sd_a: number, mean_b: number, sd_b: number, n: number, bandwidth: number, seed: bigint): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_fnnplayground_free: (a: number, b: number) => void;
    readonly channel_curves: (a: number, b: number, c: number, d: bigint) => [number, number, number, number];
    readonly fnnplayground_distances: (a: number) => [number, number];
    readonly fnnplayground_epoch: (a: number) => bigint;
    readonly fnnplayground_evaluate: (a: number) => [number, number, number, number];
    readonly fnnplayground_new: (a: number, b: number, c: number, d: bigint) => [number, number, number];
    readonly fnnplayground_sample: (a: number, b: number, c: number) => [number, number, number, number];
    readonly fnnplayground_train: (a: number, b: number) => [number, number, number, number];
    readonly overlap: (a: number, b: number, c: number, d: number, e: number, f: number, g: bigint) => [number, number, number, number];
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
