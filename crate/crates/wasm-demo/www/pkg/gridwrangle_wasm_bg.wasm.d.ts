/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_wasmsession_free: (a: number, b: number) => void;
export const fixture_csv: () => [number, number];
export const wasmsession_apply: (a: number, b: number, c: number) => [number, number, number, number];
export const wasmsession_chart: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: bigint) => [number, number, number, number];
export const wasmsession_charts: (a: number) => [number, number];
export const wasmsession_info: (a: number) => [number, number];
export const wasmsession_new: (a: number, b: number, c: number, d: number) => [number, number, number];
export const wasmsession_preview: (a: number, b: number, c: number) => [number, number, number, number];
export const wasmsession_ranked: (a: number) => [number, number];
export const wasmsession_redo: (a: number) => [number, number, number, number];
export const wasmsession_script: (a: number, b: number, c: number) => [number, number, number, number];
export const wasmsession_suggest: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const wasmsession_undo: (a: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
