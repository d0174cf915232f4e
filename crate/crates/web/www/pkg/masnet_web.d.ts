/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * `kind` is `"weights"` or `"values"`.
     */
    attention(stage: number, branch: number, kind: string): Uint8Array;
    imageA(): Uint8Array;
    imageB(): Uint8Array;
    iter(): number;
    maxIters(): number;
    constructor(seed: number, level: string);
    pairIou(): number;
    prediction(): Uint8Array;
    setLevel(level: string): void;
    showPair(index: number): void;
    size(): number;
    stages(): number;
    /**
     * Mean loss over the steps run, or NaN when training has finished.
     */
    train(steps: number): number;
    truth(): Uint8Array;
}

/**
 * Labels of the selectable attention levels.
 */
export function levels(): string[];

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_attention: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly demo_imageA: (a: number) => [number, number];
    readonly demo_imageB: (a: number) => [number, number];
    readonly demo_iter: (a: number) => number;
    readonly demo_maxIters: (a: number) => number;
    readonly demo_new: (a: number, b: number, c: number) => [number, number, number];
    readonly demo_pairIou: (a: number) => [number, number, number];
    readonly demo_prediction: (a: number) => [number, number, number, number];
    readonly demo_setLevel: (a: number, b: number, c: number) => [number, number];
    readonly demo_showPair: (a: number, b: number) => [number, number];
    readonly demo_size: (a: number) => number;
    readonly demo_stages: (a: number) => number;
    readonly demo_train: (a: number, b: number) => [number, number, number];
    readonly demo_truth: (a: number) => [number, number];
    readonly levels: () => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_drop_slice: (a: number, b: number) => void;
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
