/**
 * Binary grid containers shared with the rendering engine.
 *
 * Layout (little-endian):
 *   magic "FMAP" | version u32 | H u32 | W u32 | C u32 | payload float32[H*W*C]
 * Payload is row-major and channel-interleaved. Depth maps use magic "DMAP"
 * with C = 1 and the value 0 marking invalid pixels.
 */

import { readFileSync, writeFileSync } from 'fs'

export const FMAP_MAGIC = 'FMAP'
export const DMAP_MAGIC = 'DMAP'
export const FORMAT_VERSION = 1

const HEADER_BYTES = 4 + 4 * 4

export interface GridMap {
  height: number
  width: number
  channels: number
  /** length = height * width * channels, index = (y * width + x) * channels + c */
  data: Float32Array
}

function encode(magic: string, map: GridMap): Buffer {
  const { height, width, channels, data } = map
  if (data.length !== height * width * channels) {
    throw new Error(
      `payload length ${data.length} does not match ${height}x${width}x${channels}`,
    )
  }
  for (let i = 0; i < data.length; i++) {
    if (!Number.isFinite(data[i])) {
      throw new Error(`non-finite value at payload index ${i}`)
    }
  }
  const buf = Buffer.alloc(HEADER_BYTES + 4 * data.length)
  buf.write(magic, 0, 4, 'ascii')
  buf.writeUInt32LE(FORMAT_VERSION, 4)
  buf.writeUInt32LE(height, 8)
  buf.writeUInt32LE(width, 12)
  buf.writeUInt32LE(channels, 16)
  for (let i = 0; i < data.length; i++) {
    buf.writeFloatLE(data[i], HEADER_BYTES + 4 * i)
  }
  return buf
}

function decode(magic: string, buf: Buffer, source: string): GridMap {
  if (buf.length < HEADER_BYTES) {
    throw new Error(`${source}: truncated header`)
  }
  const gotMagic = buf.toString('ascii', 0, 4)
  if (gotMagic !== magic) {
    throw new Error(`${source}: bad magic "${gotMagic}", expected "${magic}"`)
  }
  const version = buf.readUInt32LE(4)
  if (version !== FORMAT_VERSION) {
    throw new Error(`${source}: unsupported version ${version}`)
  }
  const height = buf.readUInt32LE(8)
  const width = buf.readUInt32LE(12)
  const channels = buf.readUInt32LE(16)
  const count = height * width * channels
  if (buf.length !== HEADER_BYTES + 4 * count) {
    throw new Error(
      `${source}: payload is ${buf.length - HEADER_BYTES} bytes, expected ${4 * count}`,
    )
  }
  const data = new Float32Array(count)
  for (let i = 0; i < count; i++) {
    data[i] = buf.readFloatLE(HEADER_BYTES + 4 * i)
    if (!Number.isFinite(data[i])) {
      throw new Error(`${source}: non-finite value at payload index ${i}`)
    }
  }
  return { height, width, channels, data }
}

export function writeFeatureMap(path: string, map: GridMap): void {
  writeFileSync(path, encode(FMAP_MAGIC, map))
}

export function readFeatureMap(path: string): GridMap {
  return decode(FMAP_MAGIC, readFileSync(path), path)
}

export function writeDepthMap(path: string, map: GridMap): void {
  if (map.channels !== 1) {
    throw new Error(`depth maps must have C=1, got C=${map.channels}`)
  }
  writeFileSync(path, encode(DMAP_MAGIC, map))
}

export function readDepthMap(path: string): GridMap {
  const map = decode(DMAP_MAGIC, readFileSync(path), path)
  if (map.channels !== 1) {
    throw new Error(`${path}: depth container must have C=1, got C=${map.channels}`)
  }
  return map
}
