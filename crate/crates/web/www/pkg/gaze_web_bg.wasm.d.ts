/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const frame_count: () => number;
export const salience_at: (a: number, b: number, c: number, d: number, e: number) => [number, number];
export const scene_at: (a: number) => [number, number];
export const welch: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
