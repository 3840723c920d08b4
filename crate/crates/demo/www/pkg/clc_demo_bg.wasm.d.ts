/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const enhance_si_sdr: (a: number, b: number, c: number) => [number, number];
export const n_bins: () => number;
export const residuals: (a: number, b: number, c: number) => [number, number];
export const spectrogram: (a: number, b: number, c: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
