import assert from "node:assert/strict";
import { test } from "node:test";

import { flowFieldToRgba, flowToColor } from "../src/flowColor";

test("zero flow renders the neutral colormap origin", () => {
  const c = flowToColor(0, 0);
  assert.deepEqual(c, { r: 255, g: 255, b: 255 });
});

test("opposite directions land on different hues", () => {
  const east = flowToColor(1 / 64, 0);
  const west = flowToColor(-1 / 64, 0);
  assert.notDeepEqual(east, west);
});

test("magnitude saturates at the per-step bound", () => {
  const atBound = flowToColor(1 / 64, 0);
  const beyond = flowToColor(10 / 64, 0);
  assert.deepEqual(atBound, beyond); // saturation clamps at 1
});

test("small magnitudes are washed out relative to large ones", () => {
  const faint = flowToColor(0.1 / 64, 0);
  const strong = flowToColor(1 / 64, 0);
  // lower saturation means channel values closer together
  const spreadFaint = Math.max(faint.r, faint.g, faint.b) - Math.min(faint.r, faint.g, faint.b);
  const spreadStrong =
    Math.max(strong.r, strong.g, strong.b) - Math.min(strong.r, strong.g, strong.b);
  assert.ok(spreadFaint < spreadStrong);
});

test("field rasterization writes RGBA per pixel", () => {
  const flow = new Float32Array([0, 0, 1 / 64, 0]);
  const rgba = flowFieldToRgba(flow, 2, 1, 64, 128);
  assert.equal(rgba.length, 8);
  assert.equal(rgba[3], 128);
  assert.deepEqual([rgba[0], rgba[1], rgba[2]], [255, 255, 255]); // zero flow neutral
});
