import assert from "node:assert/strict";
import { test } from "node:test";

import {
  AnnotationState,
  canvasToImage,
  deserializeAnnotations,
  imageToCanvas,
  serializeAnnotations,
  ViewTransform,
} from "../src/annotations";

test("arrow drawn left-to-right serializes with positive dx and zero dy", () => {
  const state = new AnnotationState(64, 48);
  const view: ViewTransform = { zoom: 1, offsetX: 0, offsetY: 0 };
  state.addArrowFromDrag(view, 10, 20, 30, 20);
  const doc = serializeAnnotations(state);
  assert.equal(doc.arrows.length, 1);
  assert.ok(doc.arrows[0].dx > 0);
  assert.equal(doc.arrows[0].dy, 0);
  assert.deepEqual(
    { x: doc.arrows[0].x, y: doc.arrows[0].y },
    { x: 10, y: 20 },
  );
});

test("serialize -> deserialize -> serialize is idempotent", () => {
  const state = new AnnotationState(100, 80);
  state.addArrow(5, 6, 7, -2);
  state.addArrow(50, 40, -3, 9);
  state.addPatch(10, 10, 16, 12, "aGVsbG8=");
  const doc1 = serializeAnnotations(state);
  const doc2 = serializeAnnotations(deserializeAnnotations(doc1));
  assert.deepEqual(doc2, doc1);
});

test("zoomed drawing serializes identically to unzoomed drawing", () => {
  // the same image-space gesture performed at zoom 1 and zoom 2
  const plain: ViewTransform = { zoom: 1, offsetX: 0, offsetY: 0 };
  const zoomed: ViewTransform = { zoom: 2, offsetX: 15, offsetY: -4 };

  const a = new AnnotationState(64, 64);
  a.addArrowFromDrag(plain, 10, 20, 30, 25);

  const start = imageToCanvas(zoomed, 10, 20);
  const end = imageToCanvas(zoomed, 30, 25);
  const b = new AnnotationState(64, 64);
  b.addArrowFromDrag(zoomed, start.x, start.y, end.x, end.y);

  assert.deepEqual(serializeAnnotations(b), serializeAnnotations(a));
});

test("canvas/image transforms are inverse of each other", () => {
  const view: ViewTransform = { zoom: 2.5, offsetX: 33, offsetY: -7 };
  const img = canvasToImage(view, 120, 80);
  const back = imageToCanvas(view, img.x, img.y);
  assert.ok(Math.abs(back.x - 120) < 1e-9);
  assert.ok(Math.abs(back.y - 80) < 1e-9);
});

test("patch outside the image bounds is rejected client-side", () => {
  const state = new AnnotationState(64, 64);
  assert.equal(state.addPatch(60, 60, 10, 10, "x"), null);
  assert.equal(state.addPatch(-1, 0, 4, 4, "x"), null);
  assert.equal(state.listPatches().length, 0);
});

test("zero-length arrow drags are ignored", () => {
  const state = new AnnotationState(64, 64);
  const view: ViewTransform = { zoom: 1, offsetX: 0, offsetY: 0 };
  assert.equal(state.addArrowFromDrag(view, 10, 10, 10, 10), null);
  assert.ok(state.isEmpty());
});

test("empty state keeps submit disabled; content enables the right tool", () => {
  const state = new AnnotationState(32, 32);
  assert.ok(state.isEmpty());
  assert.ok(!state.hasArrows());
  state.addArrow(4, 4, 2, 0);
  assert.ok(state.hasArrows() && !state.hasPatches());
  state.addPatch(0, 0, 8, 8, "x");
  assert.ok(state.hasPatches());
});

test("editing: moving an arrow tip and deleting by id", () => {
  const state = new AnnotationState(64, 64);
  const arrow = state.addArrow(10, 10, 5, 0)!;
  assert.ok(state.moveArrowTip(arrow.id, 0, 8));
  assert.deepEqual(
    serializeAnnotations(state).arrows[0],
    { x: 10, y: 10, dx: 0, dy: 8 },
  );
  assert.ok(!state.moveArrowTip(arrow.id, 0, 0)); // zero direction refused
  assert.ok(state.remove(arrow.id));
  assert.ok(state.isEmpty());
});

test("wrong schema version is rejected on deserialize", () => {
  assert.throws(() =>
    deserializeAnnotations({
      version: 99,
      width: 8,
      height: 8,
      arrows: [],
      patches: [],
    }),
  );
});
