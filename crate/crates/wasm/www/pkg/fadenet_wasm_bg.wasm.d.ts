/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_fnnplayground_free: (a: number, b: number) => void;
export const channel_curves: (a: number, b: number, c: number, d: bigint) => [number, number, number, number];
export const fnnplayground_distances: (a: number) => [number, number];
export const fnnplayground_epoch: (a: number) => bigint;
export const fnnplayground_evaluate: (a: number) => [number, number, number, number];
export const fnnplayground_new: (a: number, b: number, c: number, d: bigint) => [number, number, number];
export const fnnplayground_sample: (a: number, b: number, c: number) => [number, number, number, number];
export const fnnplayground_train: (a: number, b: number) => [number, number, number, number];
export const overlap: (a: number, b: number, c: number, d: number, e: number, f: number, g: bigint) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
