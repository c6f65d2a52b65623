import { defineConfig } from "vitest/config";

// every test shells out to the Python CLI; interpreter startup dominates
export default defineConfig({
  test: {
    testTimeout: 60_000,
    hookTimeout: 60_000,
  },
});
