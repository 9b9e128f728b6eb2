/**
 * Masked perceptual distance between two images.
 *
 * The score follows the LPIPS recipe on this tool's deterministic feature
 * stack: channel-unit-normalize the activations at several layers, take the
 * squared difference, average spatially, and sum across layers with equal
 * weights. The spatial average runs over valid pixels only; the mask is
 * eroded to each layer's resolution (a coarse cell is valid only if every
 * fine pixel inside it is), so partially invalid receptive fields never
 * contribute.
 */

import { readMaskPng, readPng, RgbImage } from './png'
import { FeatureNetwork, TapName, TAPS } from './vgg'

const METRIC_LAYERS: TapName[] = ['relu1_1', 'relu2_1', 'relu3_1']

export function lpipsImages(
  a: RgbImage,
  b: RgbImage,
  valid: Uint8Array | null,
  network: FeatureNetwork = new FeatureNetwork(),
): number {
  if (a.width !== b.width || a.height !== b.height) {
    throw new Error(
      `image sizes differ: ${a.width}x${a.height} vs ${b.width}x${b.height}`,
    )
  }
  const fullMask = valid ?? new Uint8Array(a.width * a.height).fill(1)
  if (fullMask.length !== a.width * a.height) {
    throw new Error('mask size does not match the images')
  }
  let anyValid = false
  for (let i = 0; i < fullMask.length; i++) {
    if (fullMask[i]) {
      anyValid = true
      break
    }
  }
  if (!anyValid) {
    throw new Error('perceptual distance undefined: mask has no valid pixels')
  }

  const featsA = network.forward(a, METRIC_LAYERS)
  const featsB = network.forward(b, METRIC_LAYERS)

  let total = 0
  for (const layer of METRIC_LAYERS) {
    const fa = featsA.get(layer)!
    const fb = featsB.get(layer)!
    const mask = erodeMask(fullMask, a.width, a.height, TAPS[layer].scale)
    const c = fa.channels
    let sum = 0
    let count = 0
    for (let i = 0; i < fa.height * fa.width; i++) {
      if (!mask[i]) continue
      const base = i * c
      let na = 0
      let nb = 0
      for (let ch = 0; ch < c; ch++) {
        na += fa.data[base + ch] * fa.data[base + ch]
        nb += fb.data[base + ch] * fb.data[base + ch]
      }
      na = Math.sqrt(na) + 1e-10
      nb = Math.sqrt(nb) + 1e-10
      let d = 0
      for (let ch = 0; ch < c; ch++) {
        const diff = fa.data[base + ch] / na - fb.data[base + ch] / nb
        d += diff * diff
      }
      sum += d
      count += 1
    }
    if (count === 0) {
      throw new Error(`perceptual distance undefined at ${layer}: mask eroded to empty`)
    }
    total += sum / count / METRIC_LAYERS.length
  }
  return total
}

export function lpipsWarped(aPng: string, bPng: string, maskPng?: string): number {
  const a = readPng(aPng)
  const b = readPng(bPng)
  let valid: Uint8Array | null = null
  if (maskPng) {
    const mask = readMaskPng(maskPng)
    if (mask.width !== a.width || mask.height !== a.height) {
      throw new Error(
        `mask is ${mask.width}x${mask.height}, images are ${a.width}x${a.height}`,
      )
    }
    valid = mask.valid
  }
  return lpipsImages(a, b, valid)
}

/** Masked RMSE over the same validity mask, for cross-checking metric orderings. */
export function maskedRmse(a: RgbImage, b: RgbImage, valid: Uint8Array | null): number {
  if (a.width !== b.width || a.height !== b.height) {
    throw new Error('image sizes differ')
  }
  const mask = valid ?? new Uint8Array(a.width * a.height).fill(1)
  let sum = 0
  let count = 0
  for (let i = 0; i < a.width * a.height; i++) {
    if (!mask[i]) continue
    for (let c = 0; c < 3; c++) {
      const d = a.data[3 * i + c] - b.data[3 * i + c]
      sum += d * d
    }
    count += 3
  }
  if (count === 0) {
    throw new Error('masked RMSE undefined: mask has no valid pixels')
  }
  return Math.sqrt(sum / count)
}

function erodeMask(valid: Uint8Array, width: number, height: number, scale: number): Uint8Array {
  if (scale === 1) return valid
  const ow = Math.floor(width / scale)
  const oh = Math.floor(height / scale)
  const out = new Uint8Array(ow * oh).fill(1)
  for (let y = 0; y < oh; y++) {
    for (let x = 0; x < ow; x++) {
      let all = 1
      for (let dy = 0; dy < scale && all; dy++) {
        for (let dx = 0; dx < scale; dx++) {
          if (!valid[(y * scale + dy) * width + (x * scale + dx)]) {
            all = 0
            break
          }
        }
      }
      out[y * ow + x] = all
    }
  }
  return out
}
