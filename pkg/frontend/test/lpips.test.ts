import { join } from 'path'
import { describe, expect, it } from 'vitest'

import { lpipsImages, lpipsWarped, maskedRmse } from '../src/lpips'
import { writePng } from '../src/png'
import { FeatureNetwork } from '../src/vgg'
import { addNoise, syntheticImage, tempDir } from './helpers'

function discMask(size: number): Uint8Array {
  const valid = new Uint8Array(size * size)
  for (let y = 0; y < size; y++) {
    for (let x = 0; x < size; x++) {
      const dx = x - size / 2
      const dy = y - size / 2
      valid[y * size + x] = dx * dx + dy * dy < (size / 2.5) ** 2 ? 1 : 0
    }
  }
  return valid
}

describe('lpips', () => {
  it('identical images with a full mask score zero', () => {
    const dir = tempDir('lpips-')
    const a = join(dir, 'a.png')
    writePng(a, syntheticImage(32))
    expect(lpipsWarped(a, a)).toBe(0)
  })

  it('an empty mask is an explicit error', () => {
    const dir = tempDir('lpips-')
    const a = join(dir, 'a.png')
    const mask = join(dir, 'mask.png')
    writePng(a, syntheticImage(32))
    writePng(mask, {
      width: 32,
      height: 32,
      data: new Float32Array(32 * 32 * 3), // all black = all invalid
    })
    expect(() => lpipsWarped(a, a, mask)).toThrow(/no valid pixels/)
  })

  it('rejects dimension mismatches', () => {
    const dir = tempDir('lpips-')
    const a = join(dir, 'a.png')
    const b = join(dir, 'b.png')
    writePng(a, syntheticImage(32))
    writePng(b, syntheticImage(48))
    expect(() => lpipsWarped(a, b)).toThrow(/sizes differ/)
    const badMask = join(dir, 'm.png')
    writePng(badMask, syntheticImage(48))
    expect(() => lpipsWarped(a, a, badMask)).toThrow(/mask is/)
  })

  it('attenuates differences outside the mask', () => {
    const size = 32
    const net = new FeatureNetwork()
    const base = syntheticImage(size)
    const corrupted = {
      width: size,
      height: size,
      data: base.data.slice(),
    }
    // trash a corner that the disc mask excludes
    for (let y = 0; y < 6; y++) {
      for (let x = 0; x < 6; x++) {
        const i = (y * size + x) * 3
        corrupted.data[i] = 1
        corrupted.data[i + 1] = 0
        corrupted.data[i + 2] = 1
      }
    }
    const mask = discMask(size)
    const masked = lpipsImages(base, corrupted, mask, net)
    const unmasked = lpipsImages(base, corrupted, null, net)
    // deep-layer receptive fields reach past the mask edge, so the masked
    // score is small but not exactly zero
    expect(unmasked).toBeGreaterThan(0)
    expect(masked).toBeLessThan(unmasked / 3)
  })

  it('orders 10 fixture pairs like masked RMSE on at least 8', () => {
    const size = 32
    const net = new FeatureNetwork()
    const base = syntheticImage(size)
    const mask = discMask(size)

    const rmse: number[] = []
    const perceptual: number[] = []
    for (let level = 0; level < 10; level++) {
      const other = addNoise(base, 0.02 + 0.035 * level, 1000 + level)
      rmse.push(maskedRmse(base, other, mask))
      perceptual.push(lpipsImages(base, other, mask, net))
    }

    const rankOf = (values: number[]) => {
      const order = values.map((v, i) => [v, i] as const).sort((p, q) => p[0] - q[0])
      const ranks = new Array(values.length).fill(0)
      order.forEach(([, i], rank) => (ranks[i] = rank))
      return ranks
    }
    const rmseRanks = rankOf(rmse)
    const lpipsRanks = rankOf(perceptual)
    let agree = 0
    for (let i = 0; i < 10; i++) {
      if (rmseRanks[i] === lpipsRanks[i]) agree += 1
    }
    expect(agree).toBeGreaterThanOrEqual(8)
  })
})
