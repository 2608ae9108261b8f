// Wire shapes for the grantforge service: SSE event kinds and payloads.

export type EventKind =
  | "thought"
  | "tool_call"
  | "tool_result"
  | "result_item"
  | "summary"
  | "error"
  | "done";

export interface Frame {
  kind: EventKind;
  data: Record<string, unknown> & { seq: number };
}

export interface ResultCard {
  title: string;
  agency: string;
  deadline: string | null;
  url: string;
  provenance: "index" | "web";
  score: number;
  id: string | null;
}

export type Bubble =
  | { kind: "user"; text: string }
  | { kind: "thought"; text: string }
  | { kind: "tool_call"; tool: string; query: string }
  | { kind: "tool_result"; tool: string; count: number }
  | { kind: "summary"; text: string; suggestions: string[] }
  | { kind: "error"; message: string };

export type StreamStatus = "idle" | "streaming" | "error";

export interface ChatViewState {
  sessionId: string | null;
  transcript: Bubble[];
  cards: ResultCard[];
  keywords: string[];
  streamStatus: StreamStatus;
  notice: string | null;
}
