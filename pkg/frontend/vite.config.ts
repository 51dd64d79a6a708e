import { defineConfig } from "vitest/config";

export default defineConfig({
  server: {
    fs: { allow: [".."] },
    proxy: { "/ws": { target: "ws://127.0.0.1:7402", ws: true } },
  },
  test: {
    environment: "node",
    include: ["test/**/*.test.ts"],
  },
});
