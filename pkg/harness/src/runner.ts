import { spawn } from "node:child_process";
import { existsSync, mkdtempSync, rmSync, statSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { BOOTSTRAP_SOURCE } from "./bootstrap.js";

export interface ExecRequest {
    code: string;
    dataset_csv: string;
    target_plot: string;
    allowed_write_dir: string;
    timeout_s?: number;
}

export type ExitStatus = "ok" | "runtime_error" | "timeout" | "setup_error";

export interface ExecResponse {
    exit_status: ExitStatus;
    stdout: string;
    stderr: string;
    plot_written: boolean;
    duration_s: number;
}

export function pythonBinary(): string {
    return process.env.STATVIZ_HARNESS_PYTHON ?? "python3";
}

/** Run one snippet in a fresh Python subprocess; never throws for snippet
 * failures — every outcome is encoded in the response. */
export async function runExec(request: ExecRequest): Promise<ExecResponse> {
    const timeoutS = request.timeout_s ?? 60;
    const work = mkdtempSync(join(tmpdir(), "viz-harness-"));
    const codeFile = join(work, "snippet.py");
    const bootstrapFile = join(work, "bootstrap.py");
    const paramsFile = join(work, "params.json");
    writeFileSync(codeFile, request.code);
    writeFileSync(bootstrapFile, BOOTSTRAP_SOURCE);
    writeFileSync(paramsFile, JSON.stringify({
        code_file: codeFile,
        dataset_csv: request.dataset_csv,
        target_plot: request.target_plot,
        allowed_write_dir: request.allowed_write_dir,
    }));

    const started = process.hrtime.bigint();
    let stdout = "";
    let stderr = "";
    let timedOut = false;
    let spawnError: Error | null = null;

    const exitCode = await new Promise<number | null>((resolve) => {
        const child = spawn(pythonBinary(), [bootstrapFile, paramsFile], {
            stdio: ["ignore", "pipe", "pipe"],
        });
        child.stdout.setEncoding("utf8");
        child.stderr.setEncoding("utf8");
        child.stdout.on("data", (chunk: string) => { stdout += chunk; });
        child.stderr.on("data", (chunk: string) => { stderr += chunk; });
        const timer = setTimeout(() => {
            timedOut = true;
            child.kill("SIGKILL");
        }, timeoutS * 1000);
        child.on("error", (err) => {
            clearTimeout(timer);
            spawnError = err;
            resolve(null);
        });
        child.on("close", (code) => {
            clearTimeout(timer);
            resolve(code);
        });
    });

    const durationS = Number(process.hrtime.bigint() - started) / 1e9;
    rmSync(work, { recursive: true, force: true });

    const plotWritten = existsSync(request.target_plot)
        && statSync(request.target_plot).size > 0;

    let status: ExitStatus;
    if (timedOut) {
        status = "timeout";
        stderr += `\nkilled after exceeding the ${timeoutS}s timeout`;
    } else if (spawnError !== null) {
        status = "setup_error";
        stderr += `\ncould not start python: ${(spawnError as Error).message}`;
    } else if (exitCode === 0) {
        status = "ok";
    } else if (exitCode === 3) {
        status = "setup_error";
    } else {
        status = "runtime_error";
    }

    return {
        exit_status: status,
        stdout,
        stderr,
        plot_written: plotWritten,
        duration_s: durationS,
    };
}
