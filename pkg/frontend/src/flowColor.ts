/**
 * Flow-field overlay colors: hue encodes direction, saturation encodes
 * magnitude relative to the per-step bound 1/beta.  Zero flow renders as
 * the neutral gray at the colormap origin.
 */

export interface Rgb {
  r: number;
  g: number;
  b: number;
}

function hsvToRgb(h: number, s: number, v: number): Rgb {
  const i = Math.floor(h * 6);
  const f = h * 6 - i;
  const p = v * (1 - s);
  const q = v * (1 - f * s);
  const t = v * (1 - (1 - f) * s);
  const pick = [
    [v, t, p],
    [q, v, p],
    [p, v, t],
    [p, q, v],
    [t, p, v],
    [v, p, q],
  ][((i % 6) + 6) % 6];
  return {
    r: Math.round(pick[0] * 255),
    g: Math.round(pick[1] * 255),
    b: Math.round(pick[2] * 255),
  };
}

export function flowToColor(fx: number, fy: number, beta: number = 64): Rgb {
  const magnitude = Math.hypot(fx, fy);
  const saturation = Math.min(1, magnitude * beta);
  if (magnitude === 0) return hsvToRgb(0, 0, 1);
  const angle = Math.atan2(fy, fx); // [-pi, pi]
  const hue = (angle + Math.PI) / (2 * Math.PI);
  return hsvToRgb(hue, saturation, 1);
}

/** Render a (h, w, 2) flow field (flat array, x then y per pixel) to RGBA. */
export function flowFieldToRgba(
  flow: Float32Array,
  width: number,
  height: number,
  beta: number = 64,
  alpha: number = 200,
): Uint8ClampedArray {
  const out = new Uint8ClampedArray(width * height * 4);
  for (let i = 0; i < width * height; i++) {
    const { r, g, b } = flowToColor(flow[2 * i], flow[2 * i + 1], beta);
    out[4 * i] = r;
    out[4 * i + 1] = g;
    out[4 * i + 2] = b;
    out[4 * i + 3] = alpha;
  }
  return out;
}
