import { ApiClient } from "./api.js";
import { createApp } from "./app.js";

// API base URL: ?api=http://host:port beats the build-time default.
const params = new URLSearchParams(window.location.search);
const baseUrl = params.get("api") ?? "http://127.0.0.1:8000";

const root = document.getElementById("app");
if (!root) throw new Error("missing #app mount point");
createApp(root, new ApiClient(baseUrl));
