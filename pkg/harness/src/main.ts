#!/usr/bin/env node
/**
 * CLI surface of the harness. Two single-shot subcommands:
 *
 *   main.js handshake          -> capability report JSON on stdout
 *   main.js exec <request.json|->  -> execution response JSON on stdout
 *
 * The process exits 0 whenever a response was produced (including snippet
 * failures, which are encoded in exit_status); a nonzero exit means the
 * harness itself was misused or broke. Schema: see ../protocol.md.
 */
import { readFileSync } from "node:fs";

import { handshake } from "./handshake.js";
import { runExec, type ExecRequest } from "./runner.js";

const EXIT_USAGE = 64;
const EXIT_INTERNAL = 70;

function loadRequest(source: string): ExecRequest {
    const raw = source === "-"
        ? readFileSync(0, "utf8")
        : readFileSync(source, "utf8");
    const parsed = JSON.parse(raw) as Record<string, unknown>;
    for (const field of ["code", "dataset_csv", "target_plot", "allowed_write_dir"]) {
        if (typeof parsed[field] !== "string" || parsed[field] === "") {
            throw new Error(`request is missing required field '${field}'`);
        }
    }
    if (parsed.timeout_s !== undefined && typeof parsed.timeout_s !== "number") {
        throw new Error("timeout_s must be a number");
    }
    return parsed as unknown as ExecRequest;
}

async function main(): Promise<void> {
    const [mode, argument] = process.argv.slice(2);
    if (mode === "handshake") {
        process.stdout.write(JSON.stringify(await handshake()) + "\n");
        return;
    }
    if (mode === "exec" && argument) {
        let request: ExecRequest;
        try {
            request = loadRequest(argument);
        } catch (error) {
            process.stderr.write(`invalid request: ${String(error)}\n`);
            process.exit(EXIT_USAGE);
        }
        const response = await runExec(request);
        process.stdout.write(JSON.stringify(response) + "\n");
        return;
    }
    process.stderr.write("usage: main.js handshake | exec <request.json | ->\n");
    process.exit(EXIT_USAGE);
}

main().catch((error) => {
    process.stderr.write(`harness error: ${String(error)}\n`);
    process.exit(EXIT_INTERNAL);
});
