import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    // the contract test spawns the real feedback service
    testTimeout: 30_000,
    hookTimeout: 30_000,
  },
});
