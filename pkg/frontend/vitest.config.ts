import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    // The flow test boots the real backend, which dominates the budget.
    testTimeout: 120_000,
    hookTimeout: 120_000,
  },
});
