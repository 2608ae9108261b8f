import { createApiClient } from "./api.js";
import { createChatApp } from "./ui.js";

const root = document.getElementById("app");
if (!root) throw new Error("missing #app mount point");

// Same-origin by default; override for a service on another port.
const baseUrl = new URLSearchParams(window.location.search).get("api") ?? "";
createChatApp(root, createApiClient(baseUrl));
