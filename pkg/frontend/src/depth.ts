// Depth frame decoding and display mapping. Frames arrive as base64-encoded
// little-endian uint16 millimeters; invalid pixels are 0 and get a distinct
// color so occlusion and out-of-range regions are obvious.

export const DEPTH_MIN_M = 0.3;
export const DEPTH_MAX_M = 3.0;

export const INVALID_RGB: [number, number, number] = [24, 16, 48];

function base64ToBytes(b64: string): Uint8Array {
  const glob = globalThis as Record<string, any>;
  if (typeof glob.atob === "function") {
    const bin = glob.atob(b64);
    const out = new Uint8Array(bin.length);
    for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
    return out;
  }
  return new Uint8Array(glob.Buffer.from(b64, "base64"));
}

export function decodeDepth(b64: string, width: number, height: number): Uint16Array {
  const bytes = base64ToBytes(b64);
  if (bytes.byteLength !== width * height * 2) {
    throw new Error(
      `depth payload is ${bytes.byteLength} bytes, expected ${width * height * 2}`
    );
  }
  // construct explicitly little-endian regardless of platform
  const out = new Uint16Array(width * height);
  for (let i = 0; i < out.length; i++) {
    out[i] = bytes[2 * i] | (bytes[2 * i + 1] << 8);
  }
  return out;
}

/**
 * Map millimeter depth to grayscale RGBA over the camera's valid range:
 * near is bright, far is dark, invalid pixels render in INVALID_RGB.
 */
export function depthToRgba(
  depthMm: Uint16Array,
  minM: number = DEPTH_MIN_M,
  maxM: number = DEPTH_MAX_M
): Uint8ClampedArray {
  const out = new Uint8ClampedArray(depthMm.length * 4);
  const lo = minM * 1000;
  const hi = maxM * 1000;
  const span = hi - lo;
  for (let i = 0; i < depthMm.length; i++) {
    const d = depthMm[i];
    const j = i * 4;
    if (d === 0) {
      out[j] = INVALID_RGB[0];
      out[j + 1] = INVALID_RGB[1];
      out[j + 2] = INVALID_RGB[2];
    } else {
      const frac = Math.min(1, Math.max(0, (d - lo) / span));
      const shade = Math.round(255 * (1 - frac));
      out[j] = shade;
      out[j + 1] = shade;
      out[j + 2] = shade;
    }
    out[j + 3] = 255;
  }
  return out;
}
