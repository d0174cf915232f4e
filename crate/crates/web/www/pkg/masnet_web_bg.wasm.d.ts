/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demo_free: (a: number, b: number) => void;
export const demo_attention: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const demo_imageA: (a: number) => [number, number];
export const demo_imageB: (a: number) => [number, number];
export const demo_iter: (a: number) => number;
export const demo_maxIters: (a: number) => number;
export const demo_new: (a: number, b: number, c: number) => [number, number, number];
export const demo_pairIou: (a: number) => [number, number, number];
export const demo_prediction: (a: number) => [number, number, number, number];
export const demo_setLevel: (a: number, b: number, c: number) => [number, number];
export const demo_showPair: (a: number, b: number) => [number, number];
export const demo_size: (a: number) => number;
export const demo_stages: (a: number) => number;
export const demo_train: (a: number, b: number) => [number, number, number];
export const demo_truth: (a: number) => [number, number];
export const levels: () => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_drop_slice: (a: number, b: number) => void;
export const __wbindgen_start: () => void;
