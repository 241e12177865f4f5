/**
 * Annotation model and interchange serialization.
 *
 * Coordinates are stored in image-space pixels, never canvas pixels: the
 * canvas may be zoomed or letterboxed, but a serialized arrow at (10, 20)
 * always means the image pixel (10, 20).  The document schema mirrors the
 * service exactly, so a round trip through JSON is lossless.
 */

export const ANNOTATION_SCHEMA_VERSION = 1;

export interface CanvasArrow {
  /** client-side handle for editing and deletion */
  id: string;
  /** anchor, image-space pixels */
  x: number;
  y: number;
  /** direction vector, image-space pixels; non-zero */
  dx: number;
  dy: number;
}

export interface PatchPlacement {
  id: string;
  /** top-left corner, image-space pixels */
  x: number;
  y: number;
  width: number;
  height: number;
  /** base64 PNG payload (cropped swatch or uploaded image) */
  imageData: string;
}

export interface AnnotationDocument {
  version: number;
  width: number;
  height: number;
  arrows: { x: number; y: number; dx: number; dy: number }[];
  patches: {
    x: number;
    y: number;
    width: number;
    height: number;
    image_data: string;
  }[];
}

export interface ViewTransform {
  /** canvas pixels per image pixel */
  zoom: number;
  /** canvas-space offset of the image origin */
  offsetX: number;
  offsetY: number;
}

export function canvasToImage(
  view: ViewTransform,
  canvasX: number,
  canvasY: number,
): { x: number; y: number } {
  return {
    x: (canvasX - view.offsetX) / view.zoom,
    y: (canvasY - view.offsetY) / view.zoom,
  };
}

export function imageToCanvas(
  view: ViewTransform,
  imageX: number,
  imageY: number,
): { x: number; y: number } {
  return {
    x: imageX * view.zoom + view.offsetX,
    y: imageY * view.zoom + view.offsetY,
  };
}

export class AnnotationState {
  readonly width: number;
  readonly height: number;
  private arrows = new Map<string, CanvasArrow>();
  private patches = new Map<string, PatchPlacement>();
  private counter = 0;

  constructor(width: number, height: number) {
    this.width = width;
    this.height = height;
  }

  private nextId(prefix: string): string {
    this.counter += 1;
    return `${prefix}${this.counter}`;
  }

  /** Create an arrow from a canvas-space drag; stores image-space pixels. */
  addArrowFromDrag(
    view: ViewTransform,
    startCanvasX: number,
    startCanvasY: number,
    endCanvasX: number,
    endCanvasY: number,
  ): CanvasArrow | null {
    const start = canvasToImage(view, startCanvasX, startCanvasY);
    const end = canvasToImage(view, endCanvasX, endCanvasY);
    return this.addArrow(start.x, start.y, end.x - start.x, end.y - start.y);
  }

  addArrow(x: number, y: number, dx: number, dy: number): CanvasArrow | null {
    if (dx === 0 && dy === 0) return null; // zero-length drags are ignored
    if (x < 0 || y < 0 || x >= this.width || y >= this.height) return null;
    const arrow: CanvasArrow = { id: this.nextId("arrow"), x, y, dx, dy };
    this.arrows.set(arrow.id, arrow);
    return arrow;
  }

  moveArrowTip(id: string, dx: number, dy: number): boolean {
    const arrow = this.arrows.get(id);
    if (!arrow || (dx === 0 && dy === 0)) return false;
    arrow.dx = dx;
    arrow.dy = dy;
    return true;
  }

  addPatch(
    x: number,
    y: number,
    width: number,
    height: number,
    imageData: string,
  ): PatchPlacement | null {
    // client-side bounds check: a patch must lie fully within the image
    if (x < 0 || y < 0 || width <= 0 || height <= 0) return null;
    if (x + width > this.width || y + height > this.height) return null;
    const patch: PatchPlacement = {
      id: this.nextId("patch"),
      x: Math.round(x),
      y: Math.round(y),
      width: Math.round(width),
      height: Math.round(height),
      imageData,
    };
    this.patches.set(patch.id, patch);
    return patch;
  }

  remove(id: string): boolean {
    return this.arrows.delete(id) || this.patches.delete(id);
  }

  clear(): void {
    this.arrows.clear();
    this.patches.clear();
  }

  listArrows(): CanvasArrow[] {
    return [...this.arrows.values()];
  }

  listPatches(): PatchPlacement[] {
    return [...this.patches.values()];
  }

  /** Submit buttons stay disabled while this is true. */
  isEmpty(): boolean {
    return this.arrows.size === 0 && this.patches.size === 0;
  }

  hasArrows(): boolean {
    return this.arrows.size > 0;
  }

  hasPatches(): boolean {
    return this.patches.size > 0;
  }
}

export function serializeAnnotations(state: AnnotationState): AnnotationDocument {
  return {
    version: ANNOTATION_SCHEMA_VERSION,
    width: state.width,
    height: state.height,
    arrows: state.listArrows().map((a) => ({ x: a.x, y: a.y, dx: a.dx, dy: a.dy })),
    patches: state.listPatches().map((p) => ({
      x: p.x,
      y: p.y,
      width: p.width,
      height: p.height,
      image_data: p.imageData,
    })),
  };
}

export function deserializeAnnotations(doc: AnnotationDocument): AnnotationState {
  if (doc.version !== ANNOTATION_SCHEMA_VERSION) {
    throw new Error(`unsupported annotation schema version ${doc.version}`);
  }
  const state = new AnnotationState(doc.width, doc.height);
  for (const a of doc.arrows ?? []) {
    if (state.addArrow(a.x, a.y, a.dx, a.dy) === null) {
      throw new Error(`document arrow at (${a.x}, ${a.y}) is invalid`);
    }
  }
  for (const p of doc.patches ?? []) {
    if (state.addPatch(p.x, p.y, p.width, p.height, p.image_data) === null) {
      throw new Error(`document patch at (${p.x}, ${p.y}) is out of bounds`);
    }
  }
  return state;
}
