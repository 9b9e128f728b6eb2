/** 8-bit RGB PNG I/O, exposed as float arrays in [0, 1]. */

import { readFileSync, writeFileSync } from 'fs'
import { PNG } from 'pngjs'

export interface RgbImage {
  width: number
  height: number
  /** length = height * width * 3, row-major RGB in [0, 1] */
  data: Float32Array
}

export function readPng(path: string): RgbImage {
  let png: PNG
  try {
    png = PNG.sync.read(readFileSync(path))
  } catch (err) {
    throw new Error(`cannot decode ${path}: ${(err as Error).message}`)
  }
  const { width, height } = png
  const data = new Float32Array(width * height * 3)
  for (let i = 0; i < width * height; i++) {
    data[3 * i] = png.data[4 * i] / 255
    data[3 * i + 1] = png.data[4 * i + 1] / 255
    data[3 * i + 2] = png.data[4 * i + 2] / 255
  }
  return { width, height, data }
}

export function writePng(path: string, image: RgbImage): void {
  const png = new PNG({ width: image.width, height: image.height })
  for (let i = 0; i < image.width * image.height; i++) {
    for (let c = 0; c < 3; c++) {
      const v = Math.min(1, Math.max(0, image.data[3 * i + c]))
      png.data[4 * i + c] = Math.round(v * 255)
    }
    png.data[4 * i + 3] = 255
  }
  writeFileSync(path, PNG.sync.write(png))
}

/** Boolean mask from a PNG: a pixel is valid when its mean channel value exceeds 0.5. */
export function readMaskPng(path: string): { width: number; height: number; valid: Uint8Array } {
  const image = readPng(path)
  const valid = new Uint8Array(image.width * image.height)
  for (let i = 0; i < valid.length; i++) {
    const mean = (image.data[3 * i] + image.data[3 * i + 1] + image.data[3 * i + 2]) / 3
    valid[i] = mean > 0.5 ? 1 : 0
  }
  return { width: image.width, height: image.height, valid }
}
