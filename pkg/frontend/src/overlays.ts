/** Overlay marker model.
 *
 * Markers are pure functions of server payloads: clicked markers mirror the
 * session's stored clicks, reprojected/flagged markers mirror the
 * reprojections and residuals of the latest click responses. Positions stay
 * in image coordinates; panels map them to screen space when drawing.
 */

import type { ReprojectionDoc } from "./types";

export type MarkerKind = "clicked" | "reprojected" | "flagged";

export interface Marker {
  kind: MarkerKind;
  jointId: number;
  u: number;
  v: number;
  /** residual in px for flagged markers, straight from the server */
  residualPx?: number;
  /** true while a click awaits server confirmation */
  optimistic?: boolean;
}

export interface JointOverlayState {
  /** view_id -> stored click position (server-confirmed or optimistic) */
  clicks: Map<string, { u: number; v: number; optimistic: boolean }>;
  /** latest server reprojections for this joint, if triangulated */
  reprojections: ReprojectionDoc[] | null;
  flagged: boolean;
  /** view_id -> residual px from the server's triangulation */
  residuals: Record<string, number> | null;
}

export function emptyJointOverlay(): JointOverlayState {
  return { clicks: new Map(), reprojections: null, flagged: false, residuals: null };
}

export function buildPanelMarkers(
  viewId: string,
  joints: Map<number, JointOverlayState>,
): Marker[] {
  const markers: Marker[] = [];
  for (const [jointId, state] of joints) {
    const click = state.clicks.get(viewId);
    if (click) {
      markers.push({
        kind: "clicked",
        jointId,
        u: click.u,
        v: click.v,
        optimistic: click.optimistic,
      });
    }
    if (state.reprojections) {
      for (const r of state.reprojections) {
        if (r.view_id !== viewId || r.u === null || r.v === null) continue;
        markers.push({
          kind: state.flagged ? "flagged" : "reprojected",
          jointId,
          u: r.u,
          v: r.v,
          residualPx: state.residuals?.[viewId],
        });
      }
    }
  }
  return markers;
}
