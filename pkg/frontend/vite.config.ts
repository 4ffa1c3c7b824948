/// <reference types="vitest/config" />
import react from "@vitejs/plugin-react";
import { defineConfig } from "vite";

export default defineConfig({
  plugins: [react()],
  test: {
    environment: "jsdom",
    setupFiles: ["src/test-setup.ts"],
    globals: false,
    // the e2e spec needs a live service; it runs via `npm run test:e2e`
    exclude: ["e2e/**", "node_modules/**"],
  },
});
