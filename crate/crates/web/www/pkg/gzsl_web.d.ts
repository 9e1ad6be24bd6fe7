/* tslint:disable */
/* eslint-disable */

/**
 * A synthetic dataset with every stage trained once, re-evaluated under
 * interactive thresholds.
 */
export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Domain counts and accuracies for all four modes under the given
     * thresholds and seen-class penalty.
     */
    ablate(beta_in: number, beta_out: number, alpha_out: number, alpha_in: number, top_k: number, gamma: number): string;
    /**
     * Confidence histograms and unseen-detection ROC with the softmax taken
     * at temperature `tau`.
     */
    confidence(tau: number, bins: number): string;
    /**
     * Builds and trains the demo dataset; throws the error message on failure.
     */
    constructor(spread: number, seed: bigint);
}

/**
 * Draws `n` values from Weibull(`shape`, `scale`), fits a tail model to the
 * `tail` largest and returns the fit, the fitted CDF and the data.
 */
export function weibull_explorer(shape: number, scale: number, n: number, tail: number, seed: bigint): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_ablate: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number];
    readonly demo_confidence: (a: number, b: number, c: number) => [number, number];
    readonly demo_new: (a: number, b: bigint) => [number, number, number];
    readonly weibull_explorer: (a: number, b: number, c: number, d: number, e: bigint) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_table_dealloc: (a: number) => void;
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
