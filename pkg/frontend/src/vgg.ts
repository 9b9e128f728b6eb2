/**
 * VGG-19 style feature stack with deterministic seeded weights.
 *
 * The topology matches the classic 19-layer configuration up to conv4_1:
 * 3x3 convolutions (stride 1, zero padding 1), ReLU after every convolution,
 * 2x2 max pooling between blocks. Taps are the post-ReLU activations:
 *
 *   relu1_1  stride 1   64 channels
 *   relu2_1  stride 2  128 channels
 *   relu3_1  stride 4  256 channels
 *   relu4_1  stride 8  512 channels
 *
 * No pretrained weights ship with this tool; filters are drawn once from a
 * seeded PRNG with He scaling, so extraction is bit-reproducible across runs
 * and machines. The weight variant id is recorded alongside every exported
 * map (see extract.ts).
 */

import { GridMap } from './fmap'
import { RgbImage } from './png'

export const WEIGHT_VARIANT = 'seeded-he-v1'
export const DEFAULT_SEED = 20240915

export type TapName = 'relu1_1' | 'relu2_1' | 'relu3_1' | 'relu4_1'

export interface TapSpec {
  channels: number
  scale: number
}

export const TAPS: Record<TapName, TapSpec> = {
  relu1_1: { channels: 64, scale: 1 },
  relu2_1: { channels: 128, scale: 2 },
  relu3_1: { channels: 256, scale: 4 },
  relu4_1: { channels: 512, scale: 8 },
}

/** ImageNet preprocessing constants used by the pretrained original. */
const CHANNEL_MEAN = [0.485, 0.456, 0.406]
const CHANNEL_STD = [0.229, 0.224, 0.225]

type Step =
  | { kind: 'conv'; inC: number; outC: number; tap?: TapName }
  | { kind: 'pool' }

const PLAN: Step[] = [
  { kind: 'conv', inC: 3, outC: 64, tap: 'relu1_1' }, // conv1_1
  { kind: 'conv', inC: 64, outC: 64 }, // conv1_2
  { kind: 'pool' },
  { kind: 'conv', inC: 64, outC: 128, tap: 'relu2_1' }, // conv2_1
  { kind: 'conv', inC: 128, outC: 128 }, // conv2_2
  { kind: 'pool' },
  { kind: 'conv', inC: 128, outC: 256, tap: 'relu3_1' }, // conv3_1
  { kind: 'conv', inC: 256, outC: 256 }, // conv3_2
  { kind: 'conv', inC: 256, outC: 256 }, // conv3_3
  { kind: 'conv', inC: 256, outC: 256 }, // conv3_4
  { kind: 'pool' },
  { kind: 'conv', inC: 256, outC: 512, tap: 'relu4_1' }, // conv4_1
]

function mulberry32(seed: number): () => number {
  let a = seed >>> 0
  return () => {
    a |= 0
    a = (a + 0x6d2b79f5) | 0
    let t = Math.imul(a ^ (a >>> 15), 1 | a)
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296
  }
}

/** Standard normal samples via Box-Muller on a seeded uniform stream. */
function gaussian(next: () => number): number {
  let u = 0
  while (u === 0) u = next()
  const v = next()
  return Math.sqrt(-2 * Math.log(u)) * Math.cos(2 * Math.PI * v)
}

interface Activation {
  h: number
  w: number
  c: number
  data: Float32Array
}

export class FeatureNetwork {
  readonly seed: number
  /** one row of length 9*inC per output channel, patch order (ky, kx, ic) */
  private weights: Float32Array[] = []

  constructor(seed: number = DEFAULT_SEED) {
    this.seed = seed
    const next = mulberry32(seed)
    for (const step of PLAN) {
      if (step.kind !== 'conv') continue
      const fanIn = 9 * step.inC
      const std = Math.sqrt(2 / fanIn)
      const w = new Float32Array(step.outC * fanIn)
      for (let i = 0; i < w.length; i++) {
        w[i] = gaussian(next) * std
      }
      this.weights.push(w)
    }
  }

  /** Run the stack and collect the requested taps; stops at the deepest one. */
  forward(image: RgbImage, taps: TapName[]): Map<TapName, GridMap> {
    const wanted = new Set(taps)
    for (const tap of taps) {
      if (!(tap in TAPS)) {
        throw new Error(`unknown layer "${tap}"; valid: ${Object.keys(TAPS).join(', ')}`)
      }
    }
    const out = new Map<TapName, GridMap>()
    let act: Activation = normalize(image)
    let convIdx = 0
    for (const step of PLAN) {
      if (out.size === wanted.size) break
      if (step.kind === 'pool') {
        act = maxPool2(act)
        continue
      }
      act = conv3x3Relu(act, this.weights[convIdx], step.outC)
      convIdx += 1
      if (step.tap && wanted.has(step.tap)) {
        out.set(step.tap, { height: act.h, width: act.w, channels: act.c, data: act.data.slice() })
      }
    }
    return out
  }
}

function normalize(image: RgbImage): Activation {
  const { width: w, height: h, data } = image
  const out = new Float32Array(h * w * 3)
  for (let i = 0; i < h * w; i++) {
    for (let c = 0; c < 3; c++) {
      out[3 * i + c] = (data[3 * i + c] - CHANNEL_MEAN[c]) / CHANNEL_STD[c]
    }
  }
  return { h, w, c: 3, data: out }
}

function conv3x3Relu(input: Activation, weights: Float32Array, outC: number): Activation {
  const { h, w, c: inC, data } = input
  const fanIn = 9 * inC
  const out = new Float32Array(h * w * outC)
  const patch = new Float32Array(fanIn)
  for (let y = 0; y < h; y++) {
    for (let x = 0; x < w; x++) {
      // gather the zero-padded 3x3 neighborhood, (ky, kx, ic) order
      let p = 0
      for (let ky = -1; ky <= 1; ky++) {
        const yy = y + ky
        const rowOk = yy >= 0 && yy < h
        for (let kx = -1; kx <= 1; kx++) {
          const xx = x + kx
          if (rowOk && xx >= 0 && xx < w) {
            const base = (yy * w + xx) * inC
            for (let ic = 0; ic < inC; ic++) patch[p++] = data[base + ic]
          } else {
            for (let ic = 0; ic < inC; ic++) patch[p++] = 0
          }
        }
      }
      const outBase = (y * w + x) * outC
      for (let oc = 0; oc < outC; oc++) {
        const wBase = oc * fanIn
        let sum = 0
        for (let i = 0; i < fanIn; i++) {
          sum += weights[wBase + i] * patch[i]
        }
        out[outBase + oc] = sum > 0 ? sum : 0
      }
    }
  }
  return { h, w, c: outC, data: out }
}

function maxPool2(input: Activation): Activation {
  const { h, w, c, data } = input
  const oh = Math.floor(h / 2)
  const ow = Math.floor(w / 2)
  const out = new Float32Array(oh * ow * c)
  for (let y = 0; y < oh; y++) {
    for (let x = 0; x < ow; x++) {
      const i00 = ((2 * y) * w + 2 * x) * c
      const i01 = i00 + c
      const i10 = ((2 * y + 1) * w + 2 * x) * c
      const i11 = i10 + c
      const o = (y * ow + x) * c
      for (let ch = 0; ch < c; ch++) {
        out[o + ch] = Math.max(data[i00 + ch], data[i01 + ch], data[i10 + ch], data[i11 + ch])
      }
    }
  }
  return { h: oh, w: ow, c, data: out }
}
