/** Typed fetch client for the annotation service. */

import type {
  ClickResponse,
  CommitResponse,
  ErrorResponse,
  FrameViewsResponse,
  SessionDoc,
} from "./types";

export class ApiRequestError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
    public field: string | null = null,
  ) {
    super(message);
  }
}

async function unwrap<T>(resp: Response): Promise<T> {
  const body = await resp.json();
  if (!resp.ok) {
    const err = (body as ErrorResponse).error;
    throw new ApiRequestError(
      resp.status,
      err?.code ?? "HttpError",
      err?.message ?? `HTTP ${resp.status}`,
      err?.field ?? null,
    );
  }
  return body as T;
}

export interface AnnotationApi {
  openSession(captureId: string, frameId: string, viewIds?: string[]): Promise<SessionDoc>;
  getSession(sessionId: string): Promise<SessionDoc>;
  submitClick(
    sessionId: string,
    jointId: number,
    viewId: string,
    u: number,
    v: number,
    expectedVersion?: number,
  ): Promise<ClickResponse>;
  undo(sessionId: string): Promise<SessionDoc>;
  commit(sessionId: string): Promise<CommitResponse>;
  frameViews(captureId: string, frameId: string): Promise<FrameViewsResponse>;
}

export class HttpApi implements AnnotationApi {
  constructor(private baseUrl: string) {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  openSession(captureId: string, frameId: string, viewIds?: string[]): Promise<SessionDoc> {
    return fetch(this.url("/sessions"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({
        capture_id: captureId,
        frame_id: frameId,
        view_ids: viewIds ?? null,
      }),
    }).then((r) => unwrap<SessionDoc>(r));
  }

  getSession(sessionId: string): Promise<SessionDoc> {
    return fetch(this.url(`/sessions/${sessionId}`)).then((r) => unwrap<SessionDoc>(r));
  }

  submitClick(
    sessionId: string,
    jointId: number,
    viewId: string,
    u: number,
    v: number,
    expectedVersion?: number,
  ): Promise<ClickResponse> {
    return fetch(this.url(`/sessions/${sessionId}/clicks`), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({
        joint_id: jointId,
        view_id: viewId,
        u,
        v,
        expected_version: expectedVersion ?? null,
      }),
    }).then((r) => unwrap<ClickResponse>(r));
  }

  undo(sessionId: string): Promise<SessionDoc> {
    return fetch(this.url(`/sessions/${sessionId}/undo`), { method: "POST" }).then((r) =>
      unwrap<SessionDoc>(r),
    );
  }

  commit(sessionId: string): Promise<CommitResponse> {
    return fetch(this.url(`/sessions/${sessionId}/commit`), { method: "POST" }).then((r) =>
      unwrap<CommitResponse>(r),
    );
  }

  frameViews(captureId: string, frameId: string): Promise<FrameViewsResponse> {
    return fetch(this.url(`/frames/${captureId}/${frameId}/views`)).then((r) =>
      unwrap<FrameViewsResponse>(r),
    );
  }
}
