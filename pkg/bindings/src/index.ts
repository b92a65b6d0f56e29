/**
 * Scripting bindings for the fusemetrics evaluation engine.
 *
 * Everything is delegated to the engine's command-line interface and
 * its documented file formats, so numerical results are exactly the
 * values the engine itself reports.
 */

import { execFileSync } from "node:child_process";
import { mkdtempSync, mkdirSync, readFileSync, rmSync, writeFileSync, openSync, readSync, closeSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { csvRecords } from "./csv.js";
import { writePgm } from "./pgm.js";

export type GrayArray = number[][];

export interface AdjustedScore {
  q_ir: number;
  q_vis: number;
  delta: number;
  env: number;
  q_star: number;
}

export interface HandleOptions {
  /** Python interpreter with the fusemetrics package installed. */
  python?: string;
  /** Extra environment variables for engine invocations. */
  env?: Record<string, string>;
}

const FULL_REFERENCE = ["VIF", "QABF", "SSIM", "CC", "PSNR", "FMI_P", "FMI_DCT", "FMI_W"];
const REFERENCE_FREE = ["EN", "SD", "EI", "SF"];
export const ALL_METRICS = [...FULL_REFERENCE, ...REFERENCE_FREE];

function checkMagic(path: string, expected: string): void {
  const fd = openSync(path, "r");
  try {
    const head = Buffer.alloc(4);
    if (readSync(fd, head, 0, 4, 0) !== 4 || head.toString("ascii") !== expected) {
      throw new Error(`${path}: not a ${expected} parameter file`);
    }
  } finally {
    closeSync(fd);
  }
}

function validateImage(name: string, arr: GrayArray): void {
  if (!Array.isArray(arr) || arr.length === 0 || !Array.isArray(arr[0])) {
    throw new Error(`${name}: expected a 2-D array`);
  }
  const width = arr[0].length;
  for (const row of arr) {
    if (row.length !== width) throw new Error(`${name}: ragged rows`);
    for (const v of row) {
      if (!Number.isFinite(v)) throw new Error(`${name}: non-finite value`);
      if (v < 0 || v > 1) {
        throw new Error(`${name}: value ${v} outside [0, 1]`);
      }
    }
  }
}

function sameShape(a: GrayArray, b: GrayArray, na: string, nb: string): void {
  if (a.length !== b.length || a[0].length !== b[0].length) {
    throw new Error(`${na} and ${nb} differ in shape`);
  }
}

/**
 * Handle over trained artifacts plus invocation configuration.
 * All evaluation entry points require an open handle; close() frees it
 * and every later call fails.
 */
export class BoundHandle {
  readonly probePath: string | null;
  readonly surrogatePath: string | null;
  readonly python: string;
  readonly extraEnv: Record<string, string>;
  private closed = false;

  constructor(probePath: string | null, surrogatePath: string | null,
              opts: HandleOptions = {}) {
    if (probePath !== null) checkMagic(probePath, "IPRB");
    if (surrogatePath !== null) checkMagic(surrogatePath, "EVNT");
    this.probePath = probePath;
    this.surrogatePath = surrogatePath;
    this.python = opts.python ?? process.env.FUSEMETRICS_PYTHON ?? "python3";
    this.extraEnv = opts.env ?? {};
  }

  close(): void {
    this.closed = true;
  }

  assertOpen(): void {
    if (this.closed) throw new Error("handle is closed");
  }

  run(args: string[]): string {
    this.assertOpen();
    return execFileSync(this.python, ["-m", "fusemetrics.cli", ...args], {
      encoding: "utf8",
      env: { ...process.env, ...this.extraEnv },
      maxBuffer: 64 * 1024 * 1024,
    });
  }
}

/** Open a handle; artifact paths may be omitted for classical-only use. */
export function load_artifacts(probePath: string | null = null,
                               surrogatePath: string | null = null,
                               opts: HandleOptions = {}): BoundHandle {
  return new BoundHandle(probePath, surrogatePath, opts);
}

function withTempDataset<T>(ir: GrayArray, vis: GrayArray, fused: GrayArray,
                            fn: (root: string, out: string) => T): T {
  const root = mkdtempSync(join(tmpdir(), "fmx-"));
  try {
    mkdirSync(join(root, "data", "ir"), { recursive: true });
    mkdirSync(join(root, "data", "vis"), { recursive: true });
    mkdirSync(join(root, "data", "fused", "m0"), { recursive: true });
    writeFileSync(join(root, "data", "ir", "s0.pgm"), writePgm(ir));
    writeFileSync(join(root, "data", "vis", "s0.pgm"), writePgm(vis));
    writeFileSync(join(root, "data", "fused", "m0", "s0.pgm"), writePgm(fused));
    return fn(join(root, "data"), join(root, "out"));
  } finally {
    rmSync(root, { recursive: true, force: true });
  }
}

/**
 * Classical metric scores for one (ir, vis, fused) triple.
 * Values are identical to the engine's CSV output for the same pixels.
 */
export function eval_classical(handle: BoundHandle, ir: GrayArray,
                               vis: GrayArray, fused: GrayArray,
                               metricNames: string[] = ALL_METRICS):
    Record<string, number> {
  handle.assertOpen();
  validateImage("ir", ir);
  validateImage("vis", vis);
  validateImage("fused", fused);
  sameShape(ir, vis, "ir", "vis");
  sameShape(ir, fused, "ir", "fused");
  for (const m of metricNames) {
    if (!ALL_METRICS.includes(m)) throw new Error(`unknown metric ${m}`);
  }
  return withTempDataset(ir, vis, fused, (root, out) => {
    handle.run(["eval-classical", "--dataset", root, "--out", out,
                "--metrics", metricNames.join(",")]);
    const rows = csvRecords(readFileSync(join(out, "classical_scores.csv"), "utf8"));
    const scores: Record<string, number> = {};
    for (const m of metricNames) {
      const cell = rows[0][m];
      if (cell !== undefined && cell !== "") scores[m] = Number(cell);
    }
    return scores;
  });
}

/**
 * One-pass surrogate evaluation: every full-reference metric's
 * environment-adjusted score for one triple.
 */
export function eval_surrogate(handle: BoundHandle, ir: GrayArray,
                               vis: GrayArray, fused: GrayArray):
    Record<string, AdjustedScore> {
  handle.assertOpen();
  if (handle.probePath === null || handle.surrogatePath === null) {
    throw new Error("eval_surrogate needs a handle with both artifacts");
  }
  validateImage("ir", ir);
  validateImage("vis", vis);
  validateImage("fused", fused);
  sameShape(ir, vis, "ir", "vis");
  sameShape(ir, fused, "ir", "fused");
  return withTempDataset(ir, vis, fused, (root, out) => {
    handle.run(["eval-surrogate", "--dataset", root, "--out", out,
                "--probe", handle.probePath as string,
                "--surrogate", handle.surrogatePath as string]);
    const rows = csvRecords(readFileSync(join(out, "surrogate_scores.csv"), "utf8"));
    const scores: Record<string, AdjustedScore> = {};
    for (const row of rows) {
      scores[row.metric] = {
        q_ir: Number(row.q_ir),
        q_vis: Number(row.q_vis),
        delta: Number(row.delta),
        env: Number(row.env),
        q_star: Number(row.q_star),
      };
    }
    return scores;
  });
}

function checkPermutation(name: string, ranks: number[]): void {
  const sorted = [...ranks].sort((a, b) => a - b);
  for (let i = 0; i < sorted.length; i++) {
    if (sorted[i] !== i + 1) {
      throw new Error(`${name} is not a permutation of 1..${ranks.length}`);
    }
  }
}

/**
 * Metric-consistency value for two rankings (1-based permutations).
 * The rankings are materialised as a score table and pushed through
 * the engine's mc command.
 */
export function mc(handle: BoundHandle, ranksM: number[], ranksRef: number[],
                   alpha = 0.9, beta = 0.9, s = 0.0125): number {
  handle.assertOpen();
  if (ranksM.length !== ranksRef.length) {
    throw new Error(`rank lengths differ: ${ranksM.length} vs ${ranksRef.length}`);
  }
  if (ranksM.length < 2) throw new Error("mc needs at least two methods");
  checkPermutation("metric ranking", ranksM);
  checkPermutation("reference ranking", ranksRef);
  const L = ranksM.length;
  const root = mkdtempSync(join(tmpdir(), "fmc-"));
  try {
    const lines = ["method,m,ref"];
    for (let i = 0; i < L; i++) {
      // rank r maps to score L+1-r, so re-ranking reproduces the input
      lines.push(`method${String(i).padStart(3, "0")},${L + 1 - ranksM[i]},${L + 1 - ranksRef[i]}`);
    }
    writeFileSync(join(root, "scores.csv"), lines.join("\n") + "\n");
    writeFileSync(join(root, "sidecar.json"), JSON.stringify({
      m: { kind: "metric", higher_is_better: true },
      ref: { kind: "reference", higher_is_better: true },
    }));
    handle.run(["mc", join(root, "scores.csv"), join(root, "sidecar.json"),
                "--alpha", String(alpha), "--beta", String(beta),
                "--s", String(s), "--out", join(root, "rep")]);
    const rows = csvRecords(readFileSync(join(root, "rep", "mc_matrix.csv"), "utf8"));
    return Number(rows[0].ref);
  } finally {
    rmSync(root, { recursive: true, force: true });
  }
}
