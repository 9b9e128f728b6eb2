import { mkdtempSync } from 'fs'
import { tmpdir } from 'os'
import { join } from 'path'

import { RgbImage } from '../src/png'

export function tempDir(prefix: string): string {
  return mkdtempSync(join(tmpdir(), prefix))
}

/** Deterministic uniform stream for fixture construction. */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0
  return () => {
    a |= 0
    a = (a + 0x6d2b79f5) | 0
    let t = Math.imul(a ^ (a >>> 15), 1 | a)
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296
  }
}

/** Smooth two-tone gradient with a bright disc, quantized to 8 bits. */
export function syntheticImage(size: number, phase = 0): RgbImage {
  const data = new Float32Array(size * size * 3)
  for (let y = 0; y < size; y++) {
    for (let x = 0; x < size; x++) {
      const i = (y * size + x) * 3
      const dx = x - size / 2 - phase
      const dy = y - size / 2
      const disc = dx * dx + dy * dy < (size / 4) ** 2 ? 0.35 : 0
      data[i] = quantize(0.2 + (0.6 * x) / size + disc)
      data[i + 1] = quantize(0.3 + (0.5 * y) / size)
      data[i + 2] = quantize(0.7 - (0.4 * (x + y)) / (2 * size) + disc)
    }
  }
  return { width: size, height: size, data }
}

export function addNoise(image: RgbImage, amplitude: number, seed: number): RgbImage {
  const next = mulberry32(seed)
  const data = new Float32Array(image.data.length)
  for (let i = 0; i < data.length; i++) {
    data[i] = quantize(
      Math.min(1, Math.max(0, image.data[i] + amplitude * (2 * next() - 1))),
    )
  }
  return { width: image.width, height: image.height, data }
}

/** Snap to the 8-bit grid so in-memory fixtures match their PNG round trips. */
function quantize(v: number): number {
  return Math.round(Math.min(1, Math.max(0, v)) * 255) / 255
}
