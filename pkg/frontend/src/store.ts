/** Session state for the annotation tool.
 *
 * One store per browser tab drives the six view panels, the joint palette
 * and the commit banner. All geometry (triangulations, reprojections,
 * residuals) is taken verbatim from server responses; the store only
 * arranges it. Writes go through the server's optimistic version check, so
 * a stale tab gets a conflict instead of clobbering newer clicks.
 */

import type { AnnotationApi } from "./api";
import { ApiRequestError } from "./api";
import {
  buildPanelMarkers,
  emptyJointOverlay,
  type JointOverlayState,
  type Marker,
} from "./overlays";
import { JOINT_PALETTE, NUM_JOINTS, jointName } from "./palette";
import type { SessionDoc, ViewInfo } from "./types";

export interface PanelView {
  viewId: string;
  imageUrl: string;
  imageSize: [number, number];
  zoom: number;
  panX: number;
  panY: number;
}

export interface Banner {
  kind: "info" | "success" | "warning" | "error";
  text: string;
}

export class AnnotationStore {
  session: SessionDoc | null = null;
  panels: PanelView[] = [];
  joints = new Map<number, JointOverlayState>();
  selectedJoint: number | null = null;
  focusedPanel = 0;
  banner: Banner | null = null;
  /** inline prompt shown at the cursor, e.g. "select a joint first" */
  prompt: string | null = null;
  committing = false;

  constructor(private api: AnnotationApi) {}

  // --- lifecycle ---

  async open(captureId: string, frameId: string): Promise<void> {
    const session = await this.api.openSession(captureId, frameId);
    const frame = await this.api.frameViews(captureId, frameId);
    const byId = new Map(frame.views.map((v: ViewInfo) => [v.view_id, v]));
    this.panels = session.view_ids.map((viewId) => {
      const info = byId.get(viewId);
      return {
        viewId,
        imageUrl: info?.image_url ?? "",
        imageSize: [info?.image_size[0] ?? 0, info?.image_size[1] ?? 0],
        zoom: 1,
        panX: 0,
        panY: 0,
      };
    });
    this.applySession(session);
    this.selectedJoint = JOINT_PALETTE[0]?.index ?? null;
    this.banner = null;
    this.prompt = null;
  }

  /** Rebuild click overlays from a session document (open/undo/refresh). */
  private applySession(doc: SessionDoc): void {
    this.session = doc;
    const next = new Map<number, JointOverlayState>();
    for (const [key, js] of Object.entries(doc.joints)) {
      const jointId = Number(key);
      const state = emptyJointOverlay();
      for (const c of js.clicks) {
        state.clicks.set(c.view_id, { u: c.u, v: c.v, optimistic: false });
      }
      state.flagged = js.flagged_residual;
      state.residuals = js.per_view_residual ?? null;
      // reprojections only arrive with click responses; stale ones for
      // joints that are no longer triangulated must not survive
      const prior = this.joints.get(jointId);
      if (prior?.reprojections && (js.status === "triangulated" || js.status === "verified")) {
        state.reprojections = prior.reprojections;
      }
      next.set(jointId, state);
    }
    this.joints = next;
  }

  // --- palette / panels ---

  selectJoint(index: number): void {
    if (index < 0 || index >= NUM_JOINTS) return;
    this.selectedJoint = index;
    this.prompt = null;
  }

  markersFor(viewId: string): Marker[] {
    return buildPanelMarkers(viewId, this.joints);
  }

  panel(viewId: string): PanelView | undefined {
    return this.panels.find((p) => p.viewId === viewId);
  }

  setZoom(viewId: string, zoom: number, panX = 0, panY = 0): void {
    const panel = this.panel(viewId);
    if (!panel) return;
    panel.zoom = Math.min(8, Math.max(0.25, zoom));
    panel.panX = panX;
    panel.panY = panY;
  }

  // --- clicking ---

  async clickAt(viewId: string, u: number, v: number): Promise<void> {
    if (!this.session) return;
    if (this.selectedJoint === null) {
      this.prompt = "select a joint in the palette first";
      return; // no request
    }
    const jointId = this.selectedJoint;
    const state = this.joints.get(jointId) ?? emptyJointOverlay();
    const priorClick = state.clicks.get(viewId);
    state.clicks.set(viewId, { u, v, optimistic: true });
    this.joints.set(jointId, state);

    try {
      const resp = await this.api.submitClick(
        this.session.session_id,
        jointId,
        viewId,
        u,
        v,
        this.session.version,
      );
      // reconcile: the server stored exactly what we sent
      state.clicks.set(viewId, { u, v, optimistic: false });
      state.reprojections = resp.reprojections.length ? resp.reprojections : null;
      state.flagged = resp.flagged_residual;
      state.residuals = resp.triangulation?.per_view_residual ?? null;
      this.session.version = resp.version;
      const js = this.session.joints[String(jointId)];
      this.session.joints[String(jointId)] = {
        status: resp.status,
        clicks: [
          ...(js?.clicks ?? []).filter((c) => c.view_id !== viewId),
          { view_id: viewId, u, v, annotator_id: "ui", timestamp: 0 },
        ],
        flagged_residual: resp.flagged_residual,
        per_view_residual: resp.triangulation?.per_view_residual,
        point_world: resp.triangulation?.point_world,
        rms_reprojection_error: resp.triangulation?.rms_reprojection_error,
      };
      if (resp.flagged_residual) {
        const worst = Math.max(...Object.values(resp.triangulation?.per_view_residual ?? { v: 0 }));
        this.banner = {
          kind: "warning",
          text: `${resp.joint_name}: clicks disagree in 3D (worst residual ${worst.toFixed(1)} px)`,
        };
      }
    } catch (err) {
      // roll the optimistic marker back
      if (priorClick) {
        state.clicks.set(viewId, priorClick);
      } else {
        state.clicks.delete(viewId);
      }
      if (err instanceof ApiRequestError) {
        if (err.code === "StaleVersion") {
          const fresh = await this.api.getSession(this.session.session_id);
          this.applySession(fresh);
          this.banner = {
            kind: "warning",
            text: "session changed elsewhere; reloaded latest state, click again",
          };
        } else {
          this.banner = { kind: "error", text: `${err.code}: ${err.message}` };
        }
      } else {
        throw err;
      }
    }
  }

  // --- keyboard-only workflow ---

  nextJoint(): void {
    const current = this.selectedJoint ?? -1;
    this.selectJoint((current + 1) % NUM_JOINTS);
  }

  nextView(): void {
    if (this.panels.length === 0) return;
    this.focusedPanel = (this.focusedPanel + 1) % this.panels.length;
  }

  async undoLastClick(): Promise<void> {
    if (!this.session) return;
    const doc = await this.api.undo(this.session.session_id);
    this.applySession(doc);
  }

  /** Key bindings: n = next joint, v = next view, z = undo last click. */
  async handleKey(key: string): Promise<boolean> {
    switch (key) {
      case "n":
        this.nextJoint();
        return true;
      case "v":
        this.nextView();
        return true;
      case "z":
        await this.undoLastClick();
        return true;
      default:
        return false;
    }
  }

  // --- commit ---

  get triangulatedCount(): number {
    if (!this.session) return 0;
    return Object.values(this.session.joints).filter(
      (j) => j.status === "triangulated" || j.status === "verified",
    ).length;
  }

  get canCommit(): boolean {
    return this.triangulatedCount > 0 && !this.committing;
  }

  async verifyAndCommit(): Promise<void> {
    if (!this.session) return;
    if (!this.canCommit) {
      this.banner = {
        kind: "info",
        text: "nothing to commit: no joint is triangulated yet (click each joint in two views)",
      };
      return;
    }
    this.committing = true;
    try {
      const resp = await this.api.commit(this.session.session_id);
      const fresh = await this.api.getSession(this.session.session_id);
      this.applySession(fresh);
      this.banner = {
        kind: "success",
        text: `committed ${resp.committed_joints} joints across ${resp.records_updated} camera records`,
      };
    } catch (err) {
      if (err instanceof ApiRequestError && err.code === "NothingToCommit") {
        // same disabled state as the local guard
        this.banner = {
          kind: "info",
          text: "nothing to commit: no joint is triangulated yet (click each joint in two views)",
        };
      } else if (err instanceof ApiRequestError) {
        this.banner = { kind: "error", text: `${err.code}: ${err.message}` };
      } else {
        throw err;
      }
    } finally {
      this.committing = false;
    }
  }

  selectedJointName(): string {
    return this.selectedJoint === null ? "none" : jointName(this.selectedJoint);
  }
}
