// REST + SSE client for the grantforge service. This module is the only
// place the frontend talks to the backend, and it speaks exactly the
// documented routes.

import { readSseStream } from "./sse.js";
import type { Frame } from "./types.js";

export class HttpError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

export interface ApiClient {
  createSession(): Promise<string>;
  streamMessage(
    sessionId: string,
    text: string,
    onFrame: (frame: Frame) => void,
    onAccepted?: () => void,
  ): Promise<void>;
  uploadDocument(sessionId: string, text: string, filename: string): Promise<string[]>;
}

export function createApiClient(baseUrl = "", fetchFn: typeof fetch = fetch): ApiClient {
  async function createSession(): Promise<string> {
    const resp = await fetchFn(`${baseUrl}/v1/sessions`, { method: "POST" });
    if (resp.status !== 201) throw new HttpError(resp.status, await errorText(resp));
    const body = (await resp.json()) as { session_id: string };
    return body.session_id;
  }

  async function streamMessage(
    sessionId: string,
    text: string,
    onFrame: (frame: Frame) => void,
    onAccepted?: () => void,
  ): Promise<void> {
    const resp = await fetchFn(`${baseUrl}/v1/sessions/${sessionId}/messages`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ text }),
    });
    if (resp.status !== 200) throw new HttpError(resp.status, await errorText(resp));
    if (!resp.body) throw new HttpError(0, "response has no body stream");
    onAccepted?.();
    await readSseStream(resp.body, onFrame);
  }

  async function uploadDocument(
    sessionId: string,
    text: string,
    filename: string,
  ): Promise<string[]> {
    const url = `${baseUrl}/v1/sessions/${sessionId}/documents?filename=${encodeURIComponent(filename)}`;
    const resp = await fetchFn(url, {
      method: "POST",
      headers: { "Content-Type": "text/plain" },
      body: text,
    });
    if (resp.status !== 200) throw new HttpError(resp.status, await errorText(resp));
    const body = (await resp.json()) as { keywords: string[] };
    return body.keywords;
  }

  return { createSession, streamMessage, uploadDocument };
}

async function errorText(resp: Response): Promise<string> {
  try {
    const body = (await resp.json()) as { error?: string };
    return body.error ?? `HTTP ${resp.status}`;
  } catch {
    return `HTTP ${resp.status}`;
  }
}
