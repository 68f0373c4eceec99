import { defineConfig } from "vitest/config";

export default defineConfig({
    test: {
        include: ["test/**/*.test.ts"],
        // Each execution boots a Python subprocess that imports pandas and
        // matplotlib; allow generous wall time.
        testTimeout: 90_000,
        hookTimeout: 90_000,
    },
});
