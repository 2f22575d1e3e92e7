import { mountApp } from "./app";

const params = new URLSearchParams(window.location.search);
const capture = params.get("capture") ?? "cap00";
const frame = params.get("frame") ?? "f0000";
const base = params.get("api") ?? "";

const root = document.getElementById("app");
if (root) {
  mountApp(root, base, capture, frame).catch((err) => {
    root.textContent = `failed to open session: ${err}`;
  });
}
