import { spawn } from "node:child_process";

import { pythonBinary } from "./runner.js";

export const HARNESS_VERSION = "0.1.0";

export interface HandshakeReport {
    ok: boolean;
    version: string;
    capabilities: Record<string, boolean>;
    detail: string;
}

const PROBE = `
import json
capabilities = {}
for library in ("pandas", "matplotlib", "seaborn", "numpy"):
    try:
        __import__(library)
        capabilities[library] = True
    except Exception:
        capabilities[library] = False
print(json.dumps(capabilities))
`;

/** Probe the Python runtime for the tabular/plotting stack. */
export async function handshake(): Promise<HandshakeReport> {
    const result = await new Promise<{ code: number | null; out: string; err: string }>(
        (resolve) => {
            const child = spawn(pythonBinary(), ["-c", PROBE],
                { stdio: ["ignore", "pipe", "pipe"] });
            let out = "";
            let err = "";
            child.stdout.setEncoding("utf8");
            child.stderr.setEncoding("utf8");
            child.stdout.on("data", (chunk: string) => { out += chunk; });
            child.stderr.on("data", (chunk: string) => { err += chunk; });
            child.on("error", (error) => resolve({ code: null, out, err: String(error) }));
            child.on("close", (code) => resolve({ code, out, err }));
        });

    if (result.code !== 0) {
        return {
            ok: false,
            version: HARNESS_VERSION,
            capabilities: { python: false },
            detail: `python runtime missing or broken: ${result.err.trim()}`,
        };
    }
    let capabilities: Record<string, boolean>;
    try {
        capabilities = JSON.parse(result.out);
    } catch {
        return {
            ok: false,
            version: HARNESS_VERSION,
            capabilities: { python: true },
            detail: `probe produced unexpected output: ${result.out.slice(0, 120)}`,
        };
    }
    const missing = Object.entries(capabilities)
        .filter(([, present]) => !present)
        .map(([name]) => name);
    return {
        ok: missing.length === 0,
        version: HARNESS_VERSION,
        capabilities,
        detail: missing.length === 0 ? "" : `missing libraries: ${missing.join(", ")}`,
    };
}
