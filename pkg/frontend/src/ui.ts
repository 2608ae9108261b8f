// DOM chat panel. Frames render in arrival order, synchronously on receipt:
// the transcript and card list are append-only per turn, so what the user
// sees is exactly the order the server emitted.

import type { ApiClient } from "./api.js";
import { HttpError } from "./api.js";
import { fileToText, type PdfExtractor } from "./pdf.js";
import {
  applyFrame,
  beginTurn,
  initialState,
  removeKeyword,
  setKeywords,
  streamFailed,
} from "./state.js";
import type { Bubble, ChatViewState, Frame, ResultCard, StreamStatus } from "./types.js";

export interface ChatApp {
  state: ChatViewState;
  submitMessage(text: string): Promise<void>;
  uploadFile(file: File): Promise<void>;
  retryLast(): Promise<void>;
  elements: {
    transcript: HTMLElement;
    cards: HTMLElement;
    chips: HTMLElement;
    input: HTMLInputElement;
    send: HTMLButtonElement;
    retry: HTMLButtonElement;
    notice: HTMLElement;
    uploadError: HTMLElement;
  };
}

export function createChatApp(
  root: HTMLElement,
  api: ApiClient,
  pdfExtractor?: PdfExtractor,
): ChatApp {
  const state = initialState();
  root.innerHTML = `
    <div class="chat-panel">
      <div class="notice" role="status" hidden></div>
      <div class="chips" aria-label="extracted keywords"></div>
      <div class="transcript" aria-live="polite"></div>
      <div class="cards"></div>
      <form class="composer">
        <label class="upload">
          <input type="file" accept=".txt,.md,.pdf,text/plain,text/markdown,application/pdf" hidden>
          Upload
        </label>
        <span class="upload-error" role="alert" hidden></span>
        <input type="text" class="message" placeholder="Describe your research…">
        <button type="submit" class="send">Send</button>
        <button type="button" class="retry" hidden>Retry</button>
      </form>
    </div>`;

  const el = {
    transcript: root.querySelector(".transcript") as HTMLElement,
    cards: root.querySelector(".cards") as HTMLElement,
    chips: root.querySelector(".chips") as HTMLElement,
    input: root.querySelector(".message") as HTMLInputElement,
    send: root.querySelector(".send") as HTMLButtonElement,
    retry: root.querySelector(".retry") as HTMLButtonElement,
    notice: root.querySelector(".notice") as HTMLElement,
    uploadError: root.querySelector(".upload-error") as HTMLElement,
    file: root.querySelector('input[type="file"]') as HTMLInputElement,
    form: root.querySelector(".composer") as HTMLFormElement,
  };

  let lastMessage = "";

  // Reads through a call so TS narrowing from the entry guard does not hide
  // mutations made by the frame reducer during the stream.
  function status(): StreamStatus {
    return state.streamStatus;
  }

  function setComposerEnabled(enabled: boolean): void {
    el.input.disabled = !enabled;
    el.send.disabled = !enabled;
  }

  function showNotice(text: string): void {
    el.notice.textContent = text;
    el.notice.hidden = false;
  }

  async function ensureSession(): Promise<string> {
    if (state.sessionId === null) {
      state.sessionId = await api.createSession();
    }
    return state.sessionId;
  }

  function onFrame(frame: Frame): void {
    const rendered = applyFrame(state, frame);
    if (frame.kind === "result_item") {
      el.cards.appendChild(renderResultCard(rendered as ResultCard));
    } else if (frame.kind === "done") {
      setComposerEnabled(true);
    } else if (rendered !== null) {
      el.transcript.appendChild(renderBubble(rendered as Bubble));
    }
  }

  async function submitMessage(text: string): Promise<void> {
    const trimmed = text.trim();
    if (!trimmed || state.streamStatus === "streaming") return;
    lastMessage = trimmed;
    el.retry.hidden = true;
    setComposerEnabled(false);

    const onAccepted = () => {
      // Turn state mutates only once the server accepted the stream, so a
      // 409 (or any rejection) leaves the view exactly as it was.
      beginTurn(state, trimmed);
      el.transcript.appendChild(renderBubble({ kind: "user", text: trimmed }));
      el.cards.replaceChildren();
      state.cards = [];
      el.input.value = "";
    };

    try {
      const sessionId = await ensureSession();
      await api.streamMessage(sessionId, trimmed, onFrame, onAccepted);
      if (status() === "streaming") {
        // Stream ended without a done frame: treat as transport failure.
        streamFailed(state);
      }
    } catch (err) {
      if (err instanceof HttpError && err.status === 409) {
        showNotice("A turn is already in progress; try again in a moment.");
      } else {
        streamFailed(state);
      }
    }
    if (status() === "error") {
      el.retry.hidden = false;
      showNotice("The stream was interrupted.");
    }
    setComposerEnabled(status() !== "streaming");
  }

  async function uploadFile(file: File): Promise<void> {
    el.uploadError.hidden = true;
    const text = (await fileToText(file, pdfExtractor)).trim();
    if (!text) {
      el.uploadError.textContent = "That file is empty.";
      el.uploadError.hidden = false;
      return;
    }
    const sessionId = await ensureSession();
    try {
      const keywords = await api.uploadDocument(sessionId, text, file.name);
      setKeywords(state, keywords);
      renderChips();
    } catch (err) {
      el.uploadError.textContent = err instanceof Error ? err.message : String(err);
      el.uploadError.hidden = false;
    }
  }

  function renderChips(): void {
    el.chips.replaceChildren();
    for (const keyword of state.keywords) {
      const chip = document.createElement("span");
      chip.className = "chip";
      chip.textContent = keyword;
      const remove = document.createElement("button");
      remove.type = "button";
      remove.className = "chip-remove";
      remove.textContent = "×";
      remove.addEventListener("click", () => {
        removeKeyword(state, keyword);
        renderChips();
      });
      chip.appendChild(remove);
      el.chips.appendChild(chip);
    }
  }

  el.form.addEventListener("submit", (event) => {
    event.preventDefault();
    void submitMessage(el.input.value);
  });
  el.retry.addEventListener("click", () => {
    el.retry.hidden = true;
    void submitMessage(lastMessage);
  });
  el.file.addEventListener("change", () => {
    const file = el.file.files?.[0];
    if (file) void uploadFile(file);
    el.file.value = "";
  });

  return {
    state,
    submitMessage,
    uploadFile,
    retryLast: () => submitMessage(lastMessage),
    elements: el,
  };
}

export function renderBubble(bubble: Bubble): HTMLElement {
  switch (bubble.kind) {
    case "user": {
      const node = div("bubble user");
      node.textContent = bubble.text;
      return node;
    }
    case "thought": {
      // Intermediate reasoning is visible but collapsed by default.
      const details = document.createElement("details");
      details.className = "bubble thought";
      const summary = document.createElement("summary");
      summary.textContent = "Reasoning";
      const body = document.createElement("p");
      body.textContent = bubble.text;
      details.append(summary, body);
      return details;
    }
    case "tool_call": {
      const node = div("row tool-call");
      node.dataset.tool = bubble.tool;
      node.textContent = `→ ${bubble.tool}: ${bubble.query}`;
      return node;
    }
    case "tool_result": {
      const node = div("row tool-result");
      node.dataset.tool = bubble.tool;
      node.textContent = `← ${bubble.tool}: ${bubble.count} result${bubble.count === 1 ? "" : "s"}`;
      return node;
    }
    case "summary": {
      const node = div("bubble summary");
      node.textContent = bubble.text;
      if (bubble.suggestions.length > 0) {
        const hint = div("suggestions");
        hint.textContent = `Try: ${bubble.suggestions.join(", ")}`;
        node.appendChild(hint);
      }
      return node;
    }
    case "error": {
      const node = div("row error");
      node.textContent = `⚠ ${bubble.message}`;
      return node;
    }
  }
}

export function renderResultCard(card: ResultCard): HTMLElement {
  const node = div("card");
  const title = document.createElement("a");
  title.className = "card-title";
  title.href = card.url;
  title.target = "_blank";
  title.rel = "noopener noreferrer";
  title.textContent = card.title;

  const meta = div("card-meta");
  const agency = span("agency", card.agency);
  const deadline = span("deadline", card.deadline ?? "—");
  const badge = span(`badge badge-${card.provenance}`, card.provenance);
  meta.append(agency, deadline, badge);

  node.append(title, meta);
  return node;
}

function div(className: string): HTMLDivElement {
  const node = document.createElement("div");
  node.className = className;
  return node;
}

function span(className: string, text: string): HTMLSpanElement {
  const node = document.createElement("span");
  node.className = className;
  node.textContent = text;
  return node;
}
