import { execFile } from "node:child_process";
import { mkdtemp, rm } from "node:fs/promises";
import { tmpdir } from "node:os";
import { join } from "node:path";

/** Result of one CLI invocation. */
export interface CliResult {
  code: number;
  stdout: string;
  stderr: string;
}

/** Thrown when the toolkit CLI reports an error (non-zero exit). */
export class ActgramError extends Error {
  constructor(message: string, public readonly exitCode: number) {
    super(message);
    this.name = "ActgramError";
  }
}

function commandCandidates(): string[][] {
  const env = process.env.ACTGRAM_CMD;
  if (env && env.trim().length > 0) {
    return [env.trim().split(/\s+/)];
  }
  return [["actgram"], ["python3", "-m", "actgram.cli"]];
}

let resolved: string[] | null = null;

function execOnce(cmd: string[], args: string[]): Promise<CliResult> {
  return new Promise((resolve, reject) => {
    execFile(
      cmd[0],
      [...cmd.slice(1), ...args],
      { maxBuffer: 64 * 1024 * 1024 },
      (err, stdout, stderr) => {
        if (err && (err as NodeJS.ErrnoException).code === "ENOENT") {
          reject(err);
          return;
        }
        const code = err ? (typeof err.code === "number" ? err.code : 1) : 0;
        resolve({ code, stdout: String(stdout), stderr: String(stderr) });
      }
    );
  });
}

/** Run the toolkit CLI; resolves the executable once and caches it. */
export async function runCli(args: string[]): Promise<CliResult> {
  if (resolved) {
    return execOnce(resolved, args);
  }
  let lastErr: unknown = null;
  for (const cmd of commandCandidates()) {
    try {
      const out = await execOnce(cmd, args);
      resolved = cmd;
      return out;
    } catch (err) {
      lastErr = err;
    }
  }
  throw new ActgramError(
    `actgram CLI not found (set ACTGRAM_CMD): ${String(lastErr)}`,
    127
  );
}

/** Run the CLI and throw ActgramError on non-zero exit. */
export async function runCliOk(args: string[]): Promise<CliResult> {
  const res = await runCli(args);
  if (res.code !== 0) {
    throw new ActgramError(
      res.stderr.trim() || `actgram exited with code ${res.code}`,
      res.code
    );
  }
  return res;
}

/** Scratch directory for one operation; always cleaned up. */
export async function withScratch<T>(
  fn: (dir: string) => Promise<T>
): Promise<T> {
  const dir = await mkdtemp(join(tmpdir(), "actgram-"));
  try {
    return await fn(dir);
  } finally {
    await rm(dir, { recursive: true, force: true });
  }
}
