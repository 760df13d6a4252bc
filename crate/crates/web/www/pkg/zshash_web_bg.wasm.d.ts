/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_session_free: (a: number, b: number) => void;
export const session_adapt: (a: number) => [number, number, number];
export const session_coords: (a: number) => [number, number];
export const session_is_empty: (a: number) => number;
export const session_labels: (a: number) => [number, number];
export const session_len: (a: number) => number;
export const session_new: (a: number, b: number, c: number, d: number) => [number, number, number];
export const session_search: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const session_seen: (a: number) => [number, number];
export const session_train: (a: number, b: number) => [number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
