/** Canvas rendering of one view panel: image, overlays, zoom/pan.
 *
 * Markers arrive in image coordinates; only the image->screen mapping
 * (zoom and pan, presentation state) happens here.
 */

import type { Marker } from "./overlays";
import type { PanelView } from "./store";
import { JOINT_PALETTE } from "./palette";

const MARKER_STYLE: Record<Marker["kind"], { stroke: string; fill: string }> = {
  clicked: { stroke: "#ff4136", fill: "rgba(255, 65, 54, 0.6)" },
  reprojected: { stroke: "#2ecc40", fill: "rgba(46, 204, 64, 0.5)" },
  flagged: { stroke: "#ff851b", fill: "rgba(255, 133, 27, 0.5)" },
};

export class ViewPanel {
  canvas: HTMLCanvasElement;
  private image: HTMLImageElement;
  private imageReady = false;

  constructor(
    readonly view: PanelView,
    private onClick: (viewId: string, u: number, v: number) => void,
    private getMarkers: () => Marker[],
    private isFocused: () => boolean,
  ) {
    this.canvas = document.createElement("canvas");
    this.canvas.width = 512;
    this.canvas.height = Math.round((512 * view.imageSize[1]) / Math.max(1, view.imageSize[0]));
    this.canvas.className = "panel";
    this.image = new Image();
    this.image.onload = () => {
      this.imageReady = true;
      this.draw();
    };
    this.image.src = view.imageUrl;
    this.canvas.addEventListener("click", (ev) => {
      const [u, v] = this.toImage(ev.offsetX, ev.offsetY);
      this.onClick(view.viewId, u, v);
    });
    this.canvas.addEventListener("wheel", (ev) => {
      ev.preventDefault();
      const factor = ev.deltaY < 0 ? 1.25 : 0.8;
      this.view.zoom = Math.min(8, Math.max(0.25, this.view.zoom * factor));
      this.draw();
    });
  }

  /** screen px (canvas) -> image coordinates */
  private toImage(x: number, y: number): [number, number] {
    const scale = (this.canvas.width / Math.max(1, this.view.imageSize[0])) * this.view.zoom;
    return [(x - this.view.panX) / scale, (y - this.view.panY) / scale];
  }

  private toScreen(u: number, v: number): [number, number] {
    const scale = (this.canvas.width / Math.max(1, this.view.imageSize[0])) * this.view.zoom;
    return [u * scale + this.view.panX, v * scale + this.view.panY];
  }

  draw(): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    ctx.clearRect(0, 0, this.canvas.width, this.canvas.height);
    const scale = (this.canvas.width / Math.max(1, this.view.imageSize[0])) * this.view.zoom;
    if (this.imageReady) {
      ctx.drawImage(
        this.image,
        this.view.panX,
        this.view.panY,
        this.view.imageSize[0] * scale,
        this.view.imageSize[1] * scale,
      );
    } else {
      ctx.fillStyle = "#15151a";
      ctx.fillRect(0, 0, this.canvas.width, this.canvas.height);
    }
    for (const marker of this.getMarkers()) {
      const [x, y] = this.toScreen(marker.u, marker.v);
      const style = MARKER_STYLE[marker.kind];
      ctx.beginPath();
      ctx.arc(x, y, marker.kind === "clicked" ? 5 : 4, 0, Math.PI * 2);
      ctx.fillStyle = marker.optimistic ? "rgba(255, 255, 255, 0.4)" : style.fill;
      ctx.strokeStyle = style.stroke;
      ctx.lineWidth = 1.5;
      ctx.fill();
      ctx.stroke();
      if (marker.kind === "flagged" && marker.residualPx !== undefined) {
        ctx.fillStyle = style.stroke;
        ctx.font = "11px sans-serif";
        ctx.fillText(`${marker.residualPx.toFixed(1)} px`, x + 7, y - 7);
      }
      const entry = JOINT_PALETTE[marker.jointId];
      if (entry && marker.kind === "clicked") {
        ctx.fillStyle = entry.color;
        ctx.fillText(entry.name, x + 7, y + 5);
      }
    }
    ctx.strokeStyle = this.isFocused() ? "#ffffff" : "#333340";
    ctx.lineWidth = 2;
    ctx.strokeRect(1, 1, this.canvas.width - 2, this.canvas.height - 2);
  }
}
