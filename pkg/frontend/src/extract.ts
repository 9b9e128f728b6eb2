/** Batch export of feature maps into the FMAP container. */

import { mkdirSync, writeFileSync } from 'fs'
import { basename, extname, join } from 'path'

import { writeFeatureMap } from './fmap'
import { readPng } from './png'
import { DEFAULT_SEED, FeatureNetwork, TAPS, TapName, WEIGHT_VARIANT } from './vgg'

export interface ExtractionRequest {
  images: string[]
  layer: TapName
  outDir: string
  seed?: number
}

export interface ExtractionResult {
  image: string
  fmapPath: string
  height: number
  width: number
  channels: number
}

export function validateLayer(name: string): TapName {
  if (!(name in TAPS)) {
    throw new Error(`unknown layer "${name}"; valid: ${Object.keys(TAPS).join(', ')}`)
  }
  return name as TapName
}

/**
 * Extract one FMAP per input image.
 *
 * Input dimensions must be divisible by the layer stride (4 for relu3_1,
 * 8 for relu4_1) so the exported map aligns exactly with the engine's
 * depth downsampling. A JSON sidecar records the weight variant and seed,
 * since the binary container has no metadata slot.
 */
export function extract(req: ExtractionRequest): ExtractionResult[] {
  const layer = validateLayer(req.layer)
  const { scale, channels } = TAPS[layer]
  const seed = req.seed ?? DEFAULT_SEED
  const network = new FeatureNetwork(seed)
  mkdirSync(req.outDir, { recursive: true })

  const results: ExtractionResult[] = []
  for (const imagePath of req.images) {
    const image = readPng(imagePath)
    if (image.width % scale || image.height % scale) {
      throw new Error(
        `${imagePath}: size ${image.width}x${image.height} not divisible by ` +
          `the ${layer} stride ${scale}`,
      )
    }
    const fmap = network.forward(image, [layer]).get(layer)!
    if (fmap.height !== image.height / scale || fmap.width !== image.width / scale) {
      throw new Error(`internal: unexpected ${layer} shape ${fmap.width}x${fmap.height}`)
    }
    const stem = basename(imagePath, extname(imagePath))
    const fmapPath = join(req.outDir, `${stem}.${layer}.fmap`)
    writeFeatureMap(fmapPath, fmap)
    writeFileSync(
      `${fmapPath}.json`,
      JSON.stringify(
        {
          source: imagePath,
          layer,
          weight_variant: WEIGHT_VARIANT,
          seed,
          feature_scale: scale,
          normalization: 'imagenet',
        },
        null,
        2,
      ) + '\n',
    )
    results.push({
      image: imagePath,
      fmapPath,
      height: fmap.height,
      width: fmap.width,
      channels,
    })
  }
  return results
}
