/* tslint:disable */
/* eslint-disable */

export class Session {
    free(): void;
    [Symbol.dispose](): void;
    adapt(): number;
    coords(): Float64Array;
    is_empty(): boolean;
    labels(): Uint32Array;
    len(): number;
    constructor(seed: number, n_classes: number, per_class: number, seen_count: number);
    search(index: number, top: number, use_adapted: boolean): Uint32Array;
    /**
     * 1 for images of seen classes.
     */
    seen(): Uint8Array;
    train(bits: number): number;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_session_free: (a: number, b: number) => void;
    readonly session_adapt: (a: number) => [number, number, number];
    readonly session_coords: (a: number) => [number, number];
    readonly session_is_empty: (a: number) => number;
    readonly session_labels: (a: number) => [number, number];
    readonly session_len: (a: number) => number;
    readonly session_new: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly session_search: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly session_seen: (a: number) => [number, number];
    readonly session_train: (a: number, b: number) => [number, number, number];
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
