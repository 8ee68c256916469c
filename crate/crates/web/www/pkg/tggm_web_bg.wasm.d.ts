/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_tggmdemo_free: (a: number, b: number) => void;
export const tggmdemo_detect: (a: number, b: number, c: number) => [number, number, number, number];
export const tggmdemo_evaluate: (a: number, b: number) => [number, number, number, number];
export const tggmdemo_height: (a: number) => number;
export const tggmdemo_new: (a: number, b: number, c: bigint) => [number, number, number];
export const tggmdemo_overlay_rgba: (a: number, b: number) => [number, number, number, number];
export const tggmdemo_scene_rgba: (a: number) => [number, number];
export const tggmdemo_truth_json: (a: number) => [number, number];
export const tggmdemo_width: (a: number) => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_start: () => void;
