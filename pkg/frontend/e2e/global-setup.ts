import { type ChildProcess, spawn } from "node:child_process";
import path from "node:path";

const PORT = Number(process.env.E2E_PORT ?? 8731);
let child: ChildProcess | null = null;

async function waitForHealth(url: string, timeoutMs: number) {
  const deadline = Date.now() + timeoutMs;
  let lastError: unknown = null;
  while (Date.now() < deadline) {
    try {
      const res = await fetch(`${url}/api/health`);
      if (res.ok) return;
    } catch (e) {
      lastError = e;
    }
    await new Promise((r) => setTimeout(r, 500));
  }
  throw new Error(`service did not come up on ${url}: ${lastError}`);
}

export async function setup() {
  const script = path.join(__dirname, "service_fixture.py");
  child = spawn("python3", [script, "--port", String(PORT)], {
    stdio: ["ignore", "inherit", "inherit"],
  });
  child.on("exit", (code) => {
    if (code !== null && code !== 0) {
      console.error(`service fixture exited with ${code}`);
    }
  });
  // training the fixture model takes a few seconds; allow plenty
  await waitForHealth(`http://127.0.0.1:${PORT}`, 120_000);
  process.env.E2E_SERVICE_URL = `http://127.0.0.1:${PORT}`;
}

export async function teardown() {
  if (child && !child.killed) {
    child.kill("SIGTERM");
    await new Promise((r) => setTimeout(r, 300));
    if (child.exitCode === null) child.kill("SIGKILL");
  }
}
