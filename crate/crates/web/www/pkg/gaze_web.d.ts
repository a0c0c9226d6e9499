/* tslint:disable */
/* eslint-disable */

/**
 * Number of frames in the canonical scenario.
 */
export function frame_count(): number;

/**
 * Stochastic-oracle fixation probabilities at frame `index` under the given
 * cue weights.
 */
export function salience_at(index: number, talking: number, waving: number, pointing: number, box_weight: number): string;

/**
 * Persons and AOI rectangles of canonical frame `index` (clamped).
 */
export function scene_at(index: number): string;

/**
 * Welch two-sample t-test from summary statistics.
 */
export function welch(m1: number, sd1: number, n1: number, m2: number, sd2: number, n2: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly frame_count: () => number;
    readonly salience_at: (a: number, b: number, c: number, d: number, e: number) => [number, number];
    readonly scene_at: (a: number) => [number, number];
    readonly welch: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
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
