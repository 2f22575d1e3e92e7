/** End-to-end: the real store against the real Python backend.
 *
 * Spawns `handrig serve` on a synthetic dataset, drives the UI store with
 * two scripted clicks at ground-truth pixels, and checks that the overlay
 * markers in the remaining panels equal the backend's reprojection output
 * within 1 px; committing must leave a dataset that `handrig validate`
 * accepts.
 */

import { execFileSync, spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { HttpApi } from "../src/api";
import { AnnotationStore } from "../src/store";

const PY = process.env.HANDRIG_PYTHON ?? "python3";
const PORT = 8773 + (process.pid % 100);
const BASE = `http://127.0.0.1:${PORT}`;

let server: ChildProcess | null = null;
let workDir = "";
let datasetPath = "";

async function waitForServer(timeoutMs = 20000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const resp = await fetch(`${BASE}/sessions/snone`);
      if (resp.status === 404) return;
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 200));
  }
  throw new Error("backend did not come up");
}

beforeAll(async () => {
  workDir = mkdtempSync(join(tmpdir(), "handrig-e2e-"));
  datasetPath = join(workDir, "dataset.json");
  execFileSync(PY, [
    "-m", "handrig.cli", "synth",
    "--out", datasetPath,
    "--frames", "3",
    "--seed", "11",
    "--cameras", "8",
  ]);
  server = spawn(PY, [
    "-m", "handrig.cli", "serve",
    "--dataset", datasetPath,
    "--listen", `127.0.0.1:${PORT}`,
    "--sessions-dir", join(workDir, "sessions"),
  ], { stdio: "ignore" });
  await waitForServer();
}, 40000);

afterAll(() => {
  server?.kill();
});

/** Ground-truth pixel of a joint in one view, read straight from the
 * dataset file (pinhole projection of the stored world joint). */
function truthPixel(jointId: number, viewId: string): [number, number] {
  const doc = JSON.parse(readFileSync(datasetPath, "utf-8"));
  const image = doc.images.find(
    (im: { camera_id: string; frame_id: string }) =>
      im.camera_id === viewId && im.frame_id === "f0000",
  );
  const cam = doc.cameras[image.capture_id][viewId];
  const joints = doc.joints_world[image.capture_id]["f0000"];
  const p = Array.isArray(joints) ? joints[jointId] : joints[viewId][jointId];
  const rel = [p[0] - cam.campos[0], p[1] - cam.campos[1], p[2] - cam.campos[2]];
  const x = cam.camrot[0][0] * rel[0] + cam.camrot[0][1] * rel[1] + cam.camrot[0][2] * rel[2];
  const y = cam.camrot[1][0] * rel[0] + cam.camrot[1][1] * rel[1] + cam.camrot[1][2] * rel[2];
  const z = cam.camrot[2][0] * rel[0] + cam.camrot[2][1] * rel[1] + cam.camrot[2][2] * rel[2];
  return [cam.focal[0] * x / z + cam.princpt[0], cam.focal[1] * y / z + cam.princpt[1]];
}

describe("annotation tool against the live backend", () => {
  it("two scripted clicks overlay the backend's reprojections within 1 px", async () => {
    const api = new HttpApi(BASE);
    const store = new AnnotationStore(api);
    await store.open("cap00", "f0000");
    expect(store.panels.length).toBe(6);

    const jointId = 7; // r_index1 on the right-hand frame f0000
    store.selectJoint(jointId);
    const [v0, v1, ...rest] = store.panels.map((p) => p.viewId);
    const [u0, w0] = truthPixel(jointId, v0!);
    await store.clickAt(v0!, u0, w0);
    expect(store.markersFor(v0!).some((m) => m.kind === "clicked")).toBe(true);

    const [u1, w1] = truthPixel(jointId, v1!);
    await store.clickAt(v1!, u1, w1);

    // the backend's own reprojection of its triangulation, via the API
    const session = await api.getSession(store.session!.session_id);
    expect(session.joints[String(jointId)]?.status).toBe("triangulated");

    for (const view of rest) {
      const markers = store.markersFor(view).filter((m) => m.kind === "reprojected");
      expect(markers.length).toBe(1);
      // ground truth pixels are also the reprojections here: the clicks
      // were exact, so backend reprojection == projection of the true joint
      const [tu, tv] = truthPixel(jointId, view);
      expect(Math.abs(markers[0]!.u - tu)).toBeLessThan(1.0);
      expect(Math.abs(markers[0]!.v - tv)).toBeLessThan(1.0);
    }
  }, 30000);

  it("annotating more joints and committing yields a dataset that validates", async () => {
    const api = new HttpApi(BASE);
    const store = new AnnotationStore(api);
    await store.open("cap00", "f0000");
    const [v0, v1] = store.panels.map((p) => p.viewId);
    for (let jointId = 0; jointId < 21; jointId++) {
      store.selectJoint(jointId);
      const [u0, w0] = truthPixel(jointId, v0!);
      await store.clickAt(v0!, u0, w0);
      const [u1, w1] = truthPixel(jointId, v1!);
      await store.clickAt(v1!, u1, w1);
    }
    expect(store.triangulatedCount).toBe(21);
    await store.verifyAndCommit();
    expect(store.banner?.kind).toBe("success");
    expect(store.banner?.text).toMatch(/committed 21 joints/);

    const out = execFileSync(PY, ["-m", "handrig.cli", "validate", "--dataset", datasetPath], {
      encoding: "utf-8",
    });
    expect(out).toMatch(/no violations/);
  }, 60000);
});
