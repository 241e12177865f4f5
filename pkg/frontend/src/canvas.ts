/**
 * Canvas interaction layer: click-drag creates an arrow, dragging an
 * arrow tip re-aims it, Delete removes the selection, and a patch tool
 * drags out a rectangle that is filled with the active swatch color.
 * All geometry is converted to image space immediately; zooming the view
 * never changes what gets serialized.
 */

import {
  AnnotationState,
  CanvasArrow,
  ViewTransform,
  canvasToImage,
  imageToCanvas,
} from "./annotations";

export type Tool = "arrow" | "patch";

const TIP_GRAB_RADIUS_PX = 8;

export class AnnotationCanvas {
  readonly state: AnnotationState;
  view: ViewTransform = { zoom: 1, offsetX: 0, offsetY: 0 };
  tool: Tool = "arrow";
  swatchColor = "#ff8800";
  private selectedId: string | null = null;
  private dragStart: { x: number; y: number } | null = null;
  private draggingTipOf: string | null = null;
  private backdrop: HTMLImageElement | null = null;
  private listeners: (() => void)[] = [];

  constructor(
    private readonly canvas: HTMLCanvasElement,
    imageWidth: number,
    imageHeight: number,
  ) {
    this.state = new AnnotationState(imageWidth, imageHeight);
    canvas.addEventListener("pointerdown", (e) => this.onPointerDown(e));
    canvas.addEventListener("pointermove", (e) => this.onPointerMove(e));
    canvas.addEventListener("pointerup", (e) => this.onPointerUp(e));
    window.addEventListener("keydown", (e) => this.onKeyDown(e));
  }

  onChange(listener: () => void): void {
    this.listeners.push(listener);
  }

  private changed(): void {
    this.render();
    for (const listener of this.listeners) listener();
  }

  setBackdrop(img: HTMLImageElement): void {
    this.backdrop = img;
    this.fitView();
    this.render();
  }

  setZoom(zoom: number): void {
    this.view = { ...this.view, zoom };
    this.render();
  }

  private fitView(): void {
    const scale = Math.min(
      this.canvas.width / this.state.width,
      this.canvas.height / this.state.height,
    );
    this.view = {
      zoom: scale,
      offsetX: (this.canvas.width - this.state.width * scale) / 2,
      offsetY: (this.canvas.height - this.state.height * scale) / 2,
    };
  }

  private canvasPoint(e: PointerEvent): { x: number; y: number } {
    const rect = this.canvas.getBoundingClientRect();
    return { x: e.clientX - rect.left, y: e.clientY - rect.top };
  }

  private tipNear(pt: { x: number; y: number }): CanvasArrow | null {
    for (const arrow of this.state.listArrows()) {
      const tip = imageToCanvas(this.view, arrow.x + arrow.dx, arrow.y + arrow.dy);
      if (Math.hypot(tip.x - pt.x, tip.y - pt.y) <= TIP_GRAB_RADIUS_PX) {
        return arrow;
      }
    }
    return null;
  }

  private onPointerDown(e: PointerEvent): void {
    const pt = this.canvasPoint(e);
    const grabbed = this.tipNear(pt);
    if (grabbed) {
      this.draggingTipOf = grabbed.id;
      this.selectedId = grabbed.id;
      return;
    }
    this.dragStart = pt;
  }

  private onPointerMove(e: PointerEvent): void {
    if (this.draggingTipOf) {
      const arrow = this.state
        .listArrows()
        .find((a) => a.id === this.draggingTipOf);
      if (arrow) {
        const img = canvasToImage(this.view, ...Object.values(this.canvasPoint(e)) as [number, number]);
        this.state.moveArrowTip(arrow.id, img.x - arrow.x, img.y - arrow.y);
        this.render();
      }
    }
  }

  private onPointerUp(e: PointerEvent): void {
    const pt = this.canvasPoint(e);
    if (this.draggingTipOf) {
      this.draggingTipOf = null;
      this.changed();
      return;
    }
    if (!this.dragStart) return;
    const start = this.dragStart;
    this.dragStart = null;
    if (this.tool === "arrow") {
      const arrow = this.state.addArrowFromDrag(this.view, start.x, start.y, pt.x, pt.y);
      if (arrow) this.selectedId = arrow.id;
    } else {
      const a = canvasToImage(this.view, start.x, start.y);
      const b = canvasToImage(this.view, pt.x, pt.y);
      const patch = this.state.addPatch(
        Math.min(a.x, b.x),
        Math.min(a.y, b.y),
        Math.abs(b.x - a.x),
        Math.abs(b.y - a.y),
        this.swatchAsPngBase64(
          Math.max(1, Math.round(Math.abs(b.x - a.x))),
          Math.max(1, Math.round(Math.abs(b.y - a.y))),
        ),
      );
      if (patch) this.selectedId = patch.id;
    }
    this.changed();
  }

  private onKeyDown(e: KeyboardEvent): void {
    if ((e.key === "Delete" || e.key === "Backspace") && this.selectedId) {
      this.state.remove(this.selectedId);
      this.selectedId = null;
      this.changed();
    }
  }

  /** Rasterize the active swatch color into a small PNG payload. */
  private swatchAsPngBase64(width: number, height: number): string {
    const scratch = document.createElement("canvas");
    scratch.width = width;
    scratch.height = height;
    const ctx = scratch.getContext("2d")!;
    ctx.fillStyle = this.swatchColor;
    ctx.fillRect(0, 0, width, height);
    return scratch.toDataURL("image/png").split(",")[1];
  }

  render(): void {
    const ctx = this.canvas.getContext("2d")!;
    ctx.clearRect(0, 0, this.canvas.width, this.canvas.height);
    if (this.backdrop) {
      const tl = imageToCanvas(this.view, 0, 0);
      ctx.drawImage(
        this.backdrop,
        tl.x,
        tl.y,
        this.state.width * this.view.zoom,
        this.state.height * this.view.zoom,
      );
    }
    for (const patch of this.state.listPatches()) {
      const tl = imageToCanvas(this.view, patch.x, patch.y);
      ctx.strokeStyle = "#ffcc00";
      ctx.lineWidth = 2;
      ctx.strokeRect(tl.x, tl.y, patch.width * this.view.zoom, patch.height * this.view.zoom);
    }
    for (const arrow of this.state.listArrows()) {
      const from = imageToCanvas(this.view, arrow.x, arrow.y);
      const to = imageToCanvas(this.view, arrow.x + arrow.dx, arrow.y + arrow.dy);
      ctx.strokeStyle = arrow.id === this.selectedId ? "#ff4444" : "#44ddff";
      ctx.lineWidth = 2;
      ctx.beginPath();
      ctx.moveTo(from.x, from.y);
      ctx.lineTo(to.x, to.y);
      ctx.stroke();
      const angle = Math.atan2(to.y - from.y, to.x - from.x);
      ctx.beginPath();
      ctx.moveTo(to.x, to.y);
      ctx.lineTo(to.x - 8 * Math.cos(angle - 0.4), to.y - 8 * Math.sin(angle - 0.4));
      ctx.moveTo(to.x, to.y);
      ctx.lineTo(to.x - 8 * Math.cos(angle + 0.4), to.y - 8 * Math.sin(angle + 0.4));
      ctx.stroke();
    }
  }
}
