import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "node",
    environmentMatchGlobs: [
      ["test/render.test.ts", "jsdom"],
      ["test/e2e.test.ts", "jsdom"],
    ],
    testTimeout: 20_000,
    hookTimeout: 60_000,
  },
});
