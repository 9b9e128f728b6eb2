import { existsSync, readFileSync } from 'fs'
import { join } from 'path'
import { describe, expect, it } from 'vitest'

import { extract } from '../src/extract'
import { readFeatureMap } from '../src/fmap'
import { writePng } from '../src/png'
import { syntheticImage, tempDir } from './helpers'

describe('extract', () => {
  it('relu3_1 on a 64x64 image gives 16x16x256', () => {
    const dir = tempDir('extract-')
    const png = join(dir, 'img.png')
    writePng(png, syntheticImage(64))
    const [result] = extract({ images: [png], layer: 'relu3_1', outDir: dir })
    expect([result.width, result.height, result.channels]).toEqual([16, 16, 256])
    const fmap = readFeatureMap(result.fmapPath)
    expect([fmap.width, fmap.height, fmap.channels]).toEqual([16, 16, 256])
    for (const v of fmap.data.subarray(0, 1024)) expect(Number.isFinite(v)).toBe(true)
  })

  it('relu4_1 on a 64x64 image gives 8x8x512', () => {
    const dir = tempDir('extract-')
    const png = join(dir, 'img.png')
    writePng(png, syntheticImage(64))
    const [result] = extract({ images: [png], layer: 'relu4_1', outDir: dir })
    expect([result.width, result.height, result.channels]).toEqual([8, 8, 512])
  })

  it('is bit-identical across runs', () => {
    const dir = tempDir('extract-')
    const png = join(dir, 'img.png')
    writePng(png, syntheticImage(32))
    const [first] = extract({ images: [png], layer: 'relu3_1', outDir: join(dir, 'a') })
    const [second] = extract({ images: [png], layer: 'relu3_1', outDir: join(dir, 'b') })
    expect(readFileSync(first.fmapPath).equals(readFileSync(second.fmapPath))).toBe(true)
  })

  it('writes a sidecar recording the weight variant', () => {
    const dir = tempDir('extract-')
    const png = join(dir, 'img.png')
    writePng(png, syntheticImage(32))
    const [result] = extract({ images: [png], layer: 'relu3_1', outDir: dir })
    const sidecar = JSON.parse(readFileSync(`${result.fmapPath}.json`, 'utf-8'))
    expect(sidecar.weight_variant).toBe('seeded-he-v1')
    expect(sidecar.layer).toBe('relu3_1')
    expect(sidecar.feature_scale).toBe(4)
    expect(existsSync(result.fmapPath)).toBe(true)
  })

  it('rejects a layer-name typo', () => {
    expect(() =>
      extract({ images: ['x.png'], layer: 'relu3_2' as never, outDir: '.' }),
    ).toThrow(/unknown layer/)
  })

  it('rejects sizes not divisible by the layer stride', () => {
    const dir = tempDir('extract-')
    const png = join(dir, 'odd.png')
    writePng(png, syntheticImage(36))
    expect(() => extract({ images: [png], layer: 'relu4_1', outDir: dir })).toThrow(
      /not divisible/,
    )
  })

  it('rejects an undecodable image', () => {
    const dir = tempDir('extract-')
    const bogus = join(dir, 'bogus.png')
    require('fs').writeFileSync(bogus, 'not a png at all')
    expect(() => extract({ images: [bogus], layer: 'relu3_1', outDir: dir })).toThrow(
      /cannot decode/,
    )
  })
})
