/** Shapes of the annotation service's JSON responses (format_version "1").
 *
 * Every 3D or reprojection number shown in the UI comes verbatim from one
 * of these payloads; the client never computes geometry itself.
 */

export interface ApiError {
  code: string;
  message: string;
  field: string | null;
}

export interface ErrorResponse {
  format_version: string;
  error: ApiError;
}

export interface ClickRecord {
  view_id: string;
  u: number;
  v: number;
  annotator_id: string;
  timestamp: number;
}

export interface JointStateDoc {
  status: "unclicked" | "underdetermined" | "triangulated" | "verified";
  clicks: ClickRecord[];
  flagged_residual: boolean;
  point_world?: number[];
  rms_reprojection_error?: number;
  per_view_residual?: Record<string, number>;
}

export interface SessionDoc {
  format_version: string;
  session_id: string;
  capture_id: string;
  frame_id: string;
  view_ids: string[];
  version: number;
  verified: boolean;
  joints: Record<string, JointStateDoc>;
}

export interface ReprojectionDoc {
  view_id: string;
  u: number | null;
  v: number | null;
  behind_camera: boolean;
}

export interface TriangulationDoc {
  point_world: number[];
  rms_reprojection_error: number;
  per_view_residual: Record<string, number>;
  inlier_view_ids: string[];
}

export interface ClickResponse {
  format_version: string;
  session_id: string;
  joint_id: number;
  joint_name: string;
  status: JointStateDoc["status"];
  version: number;
  idempotent: boolean;
  flagged_residual: boolean;
  triangulation: TriangulationDoc | null;
  reprojections: ReprojectionDoc[];
}

export interface CommitResponse {
  format_version: string;
  session_id: string;
  committed_joints: number;
  records_updated: number;
  verified: boolean;
}

export interface ViewInfo {
  view_id: string;
  image_url: string;
  image_size: number[];
  bbox: number[];
}

export interface FrameViewsResponse {
  format_version: string;
  capture_id: string;
  frame_id: string;
  views: ViewInfo[];
}
