import { ConsoleClient } from "./client.js";
import { ConsoleStore } from "./store.js";
import { ConsoleView } from "./view.js";

const params = new URLSearchParams(window.location.search);
const url = params.get("ws") ?? "ws://127.0.0.1:8866";

const store = new ConsoleStore();
const client = new ConsoleClient(url, store, (u) => new WebSocket(u) as any);
const root = document.getElementById("app");
if (!root) throw new Error("missing #app element");
new ConsoleView(root, store, client);
client.connect();
