/**
 * Node/TypeScript bindings for the actgram activity-grammar toolkit.
 *
 * The bindings call the installed `actgram` CLI (override with the
 * ACTGRAM_CMD environment variable) and exchange data through its file
 * formats, so every number returned here is bit-for-bit what the CLI
 * produces.  All entry points are async; long parses run in a child
 * process and never block the event loop, and concurrent calls against
 * one grammar are safe.
 *
 * Exposed API: induce, refine, evaluate, load_grammar, save_grammar.
 */

import { copyFile, readFile, writeFile } from "node:fs/promises";
import { join } from "node:path";

import { ActgramError, runCliOk, withScratch } from "./cli.js";

export { ActgramError };

/** Opaque handle to a validated grammar; immutable. */
export class BoundGrammar {
  /** @internal */
  constructor(readonly text: string) {
    Object.freeze(this);
  }
}

export interface InduceParams {
  eta?: number;
  alpha?: number;
  context_window?: number;
  bootstrap_threshold?: number;
  max_iterations?: number;
}

export interface RefineOptions {
  prior_weight?: number;
  use_grammar_prior?: boolean;
  fallback_on_failure?: boolean;
  max_queue?: number;
}

export interface RefineResult {
  sentence: string[];
  frame_labels: number[];
  data_prob: number;
  grammar_prob: number;
  combined_score: number;
  fallback_used: boolean;
  log_data_prob: number;
  log_grammar_prob: number;
  pruned: boolean;
}

export interface ClassScores {
  class: string;
  precision: number;
  recall: number;
  f1: number;
  support: number;
}

export interface EvalResult {
  micro_pr: number;
  macro_precision: number;
  macro_recall: number;
  macro_f1: number;
  weighted_f1: number;
  macro_f1_class_mean: number;
  per_class: ClassScores[];
}

const INDUCE_FLAGS: Record<keyof InduceParams, string> = {
  eta: "--eta",
  alpha: "--alpha",
  context_window: "--window",
  bootstrap_threshold: "--bootstrap",
  max_iterations: "--max-iterations",
};

function formatCorpus(corpus: string[][]): string {
  return corpus.map((s) => s.join(" ")).join("\n") + "\n";
}

/**
 * Matrix CSV in the toolkit's format.  String(x) is the shortest
 * round-trip decimal for an IEEE double, so the Python side reads back
 * the exact same values.
 */
function formatMatrixCsv(matrix: number[][]): string {
  const k = matrix[0].length;
  const header = Array.from({ length: k }, (_, i) => `y${i}`).join(",");
  const rows = matrix.map((row) => row.map((x) => String(x)).join(","));
  return header + "\n" + rows.join("\n") + "\n";
}

function checkMatrix(matrix: number[][]): void {
  if (!Array.isArray(matrix) || matrix.length === 0) {
    throw new ActgramError("matrix must have at least one row", 1);
  }
  const k = matrix[0].length;
  if (k < 2) {
    throw new ActgramError("matrix needs at least two classes", 1);
  }
  matrix.forEach((row, t) => {
    if (row.length !== k) {
      throw new ActgramError(`row ${t} has ${row.length} entries, expected ${k}`, 1);
    }
    let sum = 0;
    for (const x of row) {
      if (!Number.isFinite(x) || x < 0 || x > 1) {
        throw new ActgramError(`row ${t} has an entry outside [0, 1]`, 1);
      }
      sum += x;
    }
    if (Math.abs(sum - 1) > 1e-6) {
      throw new ActgramError(`row ${t} sums to ${sum}, not 1 (1e-6)`, 1);
    }
  });
}

async function validateGrammarFile(path: string): Promise<void> {
  await runCliOk(["validate", path]);
}

/**
 * Learn a grammar from a corpus of token-name sentences and re-estimate
 * its branch probabilities.  Unknown parameter keys are rejected.
 */
export async function induce(
  corpus: string[][],
  params: InduceParams = {}
): Promise<BoundGrammar> {
  for (const key of Object.keys(params)) {
    if (!(key in INDUCE_FLAGS)) {
      throw new ActgramError(`unknown induction parameter ${JSON.stringify(key)}`, 1);
    }
  }
  if (corpus.length === 0) {
    throw new ActgramError("empty corpus", 1);
  }
  return withScratch(async (dir) => {
    const corpusPath = join(dir, "corpus.txt");
    const grammarPath = join(dir, "grammar.pcfg");
    await writeFile(corpusPath, formatCorpus(corpus), "utf8");
    const args = ["induce", corpusPath, "-o", grammarPath];
    for (const [key, flag] of Object.entries(INDUCE_FLAGS)) {
      const value = params[key as keyof InduceParams];
      if (value !== undefined) {
        args.push(flag, String(value));
      }
    }
    await runCliOk(args);
    const text = await readFile(grammarPath, "utf8");
    return new BoundGrammar(text);
  });
}

/**
 * Grammar-refine a T x K row-stochastic matrix (rows must sum to 1
 * within 1e-6; violations throw before any parsing happens).
 */
export async function refine(
  matrix: number[][],
  grammar: BoundGrammar,
  options: RefineOptions = {}
): Promise<RefineResult> {
  checkMatrix(matrix);
  return withScratch(async (dir) => {
    const matrixPath = join(dir, "matrix.csv");
    const grammarPath = join(dir, "grammar.pcfg");
    const outPath = join(dir, "result.json");
    await writeFile(matrixPath, formatMatrixCsv(matrix), "utf8");
    await writeFile(grammarPath, grammar.text, "utf8");
    const args = ["parse", matrixPath, grammarPath, "-o", outPath];
    if (options.prior_weight !== undefined) {
      args.push("--prior-weight", String(options.prior_weight));
    }
    if (options.use_grammar_prior === false) {
      args.push("--no-prior");
    }
    if (options.fallback_on_failure === false) {
      args.push("--no-fallback");
    }
    if (options.max_queue !== undefined) {
      args.push("--max-queue", String(options.max_queue));
    }
    await runCliOk(args);
    return JSON.parse(await readFile(outPath, "utf8")) as RefineResult;
  });
}

/** Frame-wise metrics for integer prediction and ground-truth labels. */
export async function evaluate(
  pred: number[],
  gt: number[],
  k?: number
): Promise<EvalResult> {
  return withScratch(async (dir) => {
    const predPath = join(dir, "pred.txt");
    const gtPath = join(dir, "gt.txt");
    await writeFile(predPath, pred.join(" ") + "\n", "utf8");
    await writeFile(gtPath, gt.join(" ") + "\n", "utf8");
    const args = ["eval", predPath, gtPath, "--json"];
    if (k !== undefined) {
      args.push("-k", String(k));
    }
    const res = await runCliOk(args);
    return JSON.parse(res.stdout) as EvalResult;
  });
}

/** Read a grammar file; construction fails unless it validates. */
export async function load_grammar(path: string): Promise<BoundGrammar> {
  await validateGrammarFile(path);
  return new BoundGrammar(await readFile(path, "utf8"));
}

/** Write a grammar handle back to a file (byte-identical text form). */
export async function save_grammar(
  grammar: BoundGrammar,
  path: string
): Promise<void> {
  await writeFile(path, grammar.text, "utf8");
}
