/* tslint:disable */
/* eslint-disable */

export class WasmSession {
    free(): void;
    [Symbol.dispose](): void;
    apply(action: string): string;
    chart(cat: string, num: string, sampling: string, k: number, seed: bigint): string;
    charts(): string;
    info(): string;
    constructor(csv: string, config: string);
    preview(action: string): string;
    ranked(): string;
    redo(): string;
    script(target: string): string;
    suggest(key: string, code: string): string;
    undo(): string;
}

export function fixture_csv(): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_wasmsession_free: (a: number, b: number) => void;
    readonly fixture_csv: () => [number, number];
    readonly wasmsession_apply: (a: number, b: number, c: number) => [number, number, number, number];
    readonly wasmsession_chart: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: bigint) => [number, number, number, number];
    readonly wasmsession_charts: (a: number) => [number, number];
    readonly wasmsession_info: (a: number) => [number, number];
    readonly wasmsession_new: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly wasmsession_preview: (a: number, b: number, c: number) => [number, number, number, number];
    readonly wasmsession_ranked: (a: number) => [number, number];
    readonly wasmsession_redo: (a: number) => [number, number, number, number];
    readonly wasmsession_script: (a: number, b: number, c: number) => [number, number, number, number];
    readonly wasmsession_suggest: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly wasmsession_undo: (a: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
