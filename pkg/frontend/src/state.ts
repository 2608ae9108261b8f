// Chat view state and the frame reducer.
//
// Frames fold into state in arrival order and nothing reorders afterwards:
// card order is exactly server emission order, and streamStatus is
// "streaming" precisely until the turn's done frame lands.

import type { Bubble, ChatViewState, Frame, ResultCard } from "./types.js";

export function initialState(): ChatViewState {
  return {
    sessionId: null,
    transcript: [],
    cards: [],
    keywords: [],
    streamStatus: "idle",
    notice: null,
  };
}

export function beginTurn(state: ChatViewState, userText: string): void {
  state.transcript.push({ kind: "user", text: userText });
  state.streamStatus = "streaming";
  state.notice = null;
}

export function applyFrame(state: ChatViewState, frame: Frame): Bubble | ResultCard | null {
  switch (frame.kind) {
    case "thought": {
      const bubble: Bubble = { kind: "thought", text: String(frame.data.text ?? "") };
      state.transcript.push(bubble);
      return bubble;
    }
    case "tool_call": {
      const bubble: Bubble = {
        kind: "tool_call",
        tool: String(frame.data.tool ?? ""),
        query: String(frame.data.query ?? ""),
      };
      state.transcript.push(bubble);
      return bubble;
    }
    case "tool_result": {
      const bubble: Bubble = {
        kind: "tool_result",
        tool: String(frame.data.tool ?? ""),
        count: Number(frame.data.count ?? 0),
      };
      state.transcript.push(bubble);
      return bubble;
    }
    case "result_item": {
      const card: ResultCard = {
        title: String(frame.data.title ?? ""),
        agency: String(frame.data.agency ?? ""),
        deadline: (frame.data.deadline as string | null) ?? null,
        url: String(frame.data.url ?? ""),
        provenance: frame.data.provenance === "web" ? "web" : "index",
        score: Number(frame.data.score ?? 0),
        id: (frame.data.id as string | null) ?? null,
      };
      state.cards.push(card);
      return card;
    }
    case "summary": {
      const bubble: Bubble = {
        kind: "summary",
        text: String(frame.data.text ?? ""),
        suggestions: (frame.data.suggestions as string[] | undefined) ?? [],
      };
      state.transcript.push(bubble);
      return bubble;
    }
    case "error": {
      const bubble: Bubble = { kind: "error", message: String(frame.data.message ?? "") };
      state.transcript.push(bubble);
      return bubble;
    }
    case "done": {
      state.streamStatus = "idle";
      return null;
    }
  }
}

export function streamFailed(state: ChatViewState): void {
  state.streamStatus = "error";
}

export function setKeywords(state: ChatViewState, keywords: string[]): void {
  state.keywords = [...keywords];
}

export function removeKeyword(state: ChatViewState, keyword: string): void {
  state.keywords = state.keywords.filter((k) => k !== keyword);
}
