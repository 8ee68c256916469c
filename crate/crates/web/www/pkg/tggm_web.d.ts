/* tslint:disable */
/* eslint-disable */

export class TggmDemo {
    free(): void;
    [Symbol.dispose](): void;
    detect(epochs_per_iteration: number, max_iterations: number): string;
    evaluate(grid_size: number): string;
    height(): number;
    constructor(difficulty: string, seed: bigint);
    overlay_rgba(grid_size: number): Uint8Array;
    scene_rgba(): Uint8Array;
    truth_json(): string;
    width(): number;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_tggmdemo_free: (a: number, b: number) => void;
    readonly tggmdemo_detect: (a: number, b: number, c: number) => [number, number, number, number];
    readonly tggmdemo_evaluate: (a: number, b: number) => [number, number, number, number];
    readonly tggmdemo_height: (a: number) => number;
    readonly tggmdemo_new: (a: number, b: number, c: bigint) => [number, number, number];
    readonly tggmdemo_overlay_rgba: (a: number, b: number) => [number, number, number, number];
    readonly tggmdemo_scene_rgba: (a: number) => [number, number];
    readonly tggmdemo_truth_json: (a: number) => [number, number];
    readonly tggmdemo_width: (a: number) => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
