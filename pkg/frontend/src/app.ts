/** DOM wiring: panels grid, joint palette, banner, commit, key bindings. */

import { HttpApi } from "./api";
import { JOINT_PALETTE } from "./palette";
import { ViewPanel } from "./panel";
import { AnnotationStore } from "./store";

export async function mountApp(
  root: HTMLElement,
  baseUrl: string,
  captureId: string,
  frameId: string,
): Promise<AnnotationStore> {
  const store = new AnnotationStore(new HttpApi(baseUrl));
  await store.open(captureId, frameId);

  root.innerHTML = "";
  const layout = document.createElement("div");
  layout.className = "layout";
  const grid = document.createElement("div");
  grid.className = "grid";
  const side = document.createElement("div");
  side.className = "side";
  layout.append(grid, side);
  root.append(layout);

  const panels: ViewPanel[] = store.panels.map((view, i) => {
    const panel = new ViewPanel(
      view,
      (viewId, u, v) => {
        void store.clickAt(viewId, u, v).then(redraw);
      },
      () => store.markersFor(view.viewId),
      () => store.focusedPanel === i,
    );
    grid.append(panel.canvas);
    return panel;
  });

  const bannerEl = document.createElement("div");
  bannerEl.className = "banner";
  const promptEl = document.createElement("div");
  promptEl.className = "prompt";
  const paletteEl = document.createElement("div");
  paletteEl.className = "palette";
  const commitBtn = document.createElement("button");
  commitBtn.textContent = "verify & commit";
  commitBtn.addEventListener("click", () => {
    void store.verifyAndCommit().then(redraw);
  });
  const help = document.createElement("div");
  help.className = "help";
  help.textContent = "keys: n = next joint, v = next view, z = undo last click";
  side.append(bannerEl, promptEl, paletteEl, commitBtn, help);

  for (const entry of JOINT_PALETTE) {
    const item = document.createElement("button");
    item.className = "joint";
    item.dataset.index = String(entry.index);
    item.textContent = entry.name;
    item.style.borderLeft = `6px solid ${entry.color}`;
    item.addEventListener("click", () => {
      store.selectJoint(entry.index);
      redraw();
    });
    paletteEl.append(item);
  }

  function redraw(): void {
    panels.forEach((p) => p.draw());
    bannerEl.textContent = store.banner ? store.banner.text : "";
    bannerEl.dataset.kind = store.banner?.kind ?? "";
    promptEl.textContent = store.prompt ?? "";
    commitBtn.disabled = !store.canCommit;
    commitBtn.title = store.canCommit
      ? ""
      : "nothing to commit yet: every joint needs clicks in two views";
    for (const el of paletteEl.querySelectorAll<HTMLButtonElement>(".joint")) {
      el.classList.toggle("selected", Number(el.dataset.index) === store.selectedJoint);
    }
  }

  window.addEventListener("keydown", (ev) => {
    if (ev.target instanceof HTMLInputElement) return;
    void store.handleKey(ev.key).then((handled) => {
      if (handled) redraw();
    });
  });

  redraw();
  return store;
}
