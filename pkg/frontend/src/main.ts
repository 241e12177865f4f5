/**
 * App assembly: upload an image, draw arrows or place patches, submit for
 * latent-code optimization, and watch the looped preview.  At most one
 * optimization request is in flight per session; the submit controls lock
 * while it runs.
 */

import { serializeAnnotations } from "./annotations";
import { ServiceClient } from "./api";
import { AnnotationCanvas, Tool } from "./canvas";
import { PreviewPlayer } from "./player";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

export function startApp(): void {
  const client = new ServiceClient(
    (window as unknown as { SERVICE_URL?: string }).SERVICE_URL ?? "http://127.0.0.1:8000",
  );
  const upload = el<HTMLInputElement>("upload");
  const canvasNode = el<HTMLCanvasElement>("editor");
  const previewNode = el<HTMLCanvasElement>("preview");
  const toolSelect = el<HTMLSelectElement>("tool");
  const zoomInput = el<HTMLInputElement>("zoom");
  const submitMotion = el<HTMLButtonElement>("submit-motion");
  const submitAppearance = el<HTMLButtonElement>("submit-appearance");
  const playButton = el<HTMLButtonElement>("play");
  const overlayButton = el<HTMLButtonElement>("overlay");
  const status = el<HTMLSpanElement>("status");

  let sessionId: string | null = null;
  let editor: AnnotationCanvas | null = null;
  let busy = false;

  const previewCtx = previewNode.getContext("2d")!;
  const player = new PreviewPlayer((frame) => {
    const img = new Image();
    img.onload = () => {
      previewCtx.clearRect(0, 0, previewNode.width, previewNode.height);
      previewCtx.drawImage(img, 0, 0, previewNode.width, previewNode.height);
    };
    img.src = `data:image/png;base64,${frame.imageData}`;
  });

  function refreshControls(): void {
    const hasSession = sessionId !== null;
    submitMotion.disabled =
      busy || !hasSession || !editor || !editor.state.hasArrows();
    submitAppearance.disabled =
      busy || !hasSession || !editor || !editor.state.hasPatches();
  }

  async function refreshPreview(): Promise<void> {
    if (!sessionId) return;
    status.textContent = "rendering preview…";
    try {
      const preview = await client.fetchPreview(sessionId);
      player.setFrames(preview.frames.map((f) => ({ imageData: f })));
      player.play();
      status.textContent = `preview ${preview.count} frames (etag ${preview.etag.slice(0, 8)})`;
    } catch (err) {
      status.textContent = `preview failed: ${err}. Click play to retry.`;
    }
  }

  upload.addEventListener("change", async () => {
    const file = upload.files?.[0];
    if (!file) return;
    status.textContent = "uploading…";
    const info = await client.createSession(file, file.name);
    sessionId = info.session_id;
    editor = new AnnotationCanvas(canvasNode, info.width, info.height);
    editor.onChange(refreshControls);
    const img = new Image();
    img.onload = () => editor!.setBackdrop(img);
    img.src = URL.createObjectURL(file);
    status.textContent = `session ${info.session_id.slice(0, 8)} (${info.width}×${info.height})`;
    refreshControls();
    await refreshPreview();
  });

  toolSelect.addEventListener("change", () => {
    if (editor) editor.tool = toolSelect.value as Tool;
  });

  zoomInput.addEventListener("input", () => {
    if (editor) editor.setZoom(Number(zoomInput.value));
  });

  async function submit(kind: "motion" | "appearance"): Promise<void> {
    if (!sessionId || !editor || busy) return;
    busy = true;
    refreshControls();
    status.textContent = `optimizing ${kind} code…`;
    try {
      const doc = serializeAnnotations(editor.state);
      const result =
        kind === "motion"
          ? await client.submitMotionAnnotation(sessionId, doc)
          : await client.submitAppearanceAnnotation(sessionId, doc);
      status.textContent =
        `${kind} objective ${result.objective_trace[0]?.toFixed(4)} → ` +
        `${result.best_objective.toFixed(4)} (step ${result.best_step})`;
      await refreshPreview();
    } catch (err) {
      status.textContent = `optimization failed: ${err}`;
    } finally {
      busy = false;
      refreshControls();
    }
  }

  submitMotion.addEventListener("click", () => void submit("motion"));
  submitAppearance.addEventListener("click", () => void submit("appearance"));
  playButton.addEventListener("click", () => {
    if (player.isPlaying()) {
      player.pause();
      playButton.textContent = "play";
    } else {
      if (player.frameCount() === 0) void refreshPreview();
      player.play();
      playButton.textContent = "pause";
    }
  });
  overlayButton.addEventListener("click", () => {
    const on = player.toggleOverlay();
    overlayButton.textContent = on ? "overlay: on" : "overlay: off";
  });

  refreshControls();
}

if (typeof document !== "undefined" && document.readyState !== "loading") {
  startApp();
} else if (typeof document !== "undefined") {
  document.addEventListener("DOMContentLoaded", startApp);
}
