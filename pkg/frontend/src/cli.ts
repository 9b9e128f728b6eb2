#!/usr/bin/env node
/**
 * Command-line surface:
 *
 *   pointstyle-features extract --layer relu3_1 --out DIR image.png [...]
 *   pointstyle-features lpips a.png b.png [--mask mask.png]
 */

import { extract, validateLayer } from './extract'
import { lpipsWarped } from './lpips'
import { DEFAULT_SEED } from './vgg'

function fail(message: string): never {
  console.error(`error: ${message}`)
  process.exit(2)
}

interface Parsed {
  flags: Map<string, string>
  positional: string[]
}

function parseArgs(argv: string[], known: Set<string>): Parsed {
  const flags = new Map<string, string>()
  const positional: string[] = []
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i]
    if (arg.startsWith('--')) {
      const name = arg.slice(2)
      if (!known.has(name)) fail(`unknown flag --${name}`)
      const value = argv[++i]
      if (value === undefined) fail(`--${name} needs a value`)
      flags.set(name, value)
    } else {
      positional.push(arg)
    }
  }
  return { flags, positional }
}

function cmdExtract(argv: string[]): number {
  const { flags, positional } = parseArgs(argv, new Set(['layer', 'out', 'seed']))
  if (positional.length === 0) fail('extract needs at least one image')
  const layer = validateLayer(flags.get('layer') ?? 'relu3_1')
  const outDir = flags.get('out') ?? '.'
  const seed = flags.has('seed') ? Number(flags.get('seed')) : DEFAULT_SEED
  if (!Number.isFinite(seed)) fail(`--seed must be a number, got "${flags.get('seed')}"`)
  const results = extract({ images: positional, layer, outDir, seed })
  for (const r of results) {
    console.log(`${r.image} -> ${r.fmapPath} (${r.width}x${r.height}x${r.channels})`)
  }
  return 0
}

function cmdLpips(argv: string[]): number {
  const { flags, positional } = parseArgs(argv, new Set(['mask']))
  if (positional.length !== 2) fail('lpips needs exactly two images')
  const score = lpipsWarped(positional[0], positional[1], flags.get('mask'))
  console.log(score.toFixed(6))
  return 0
}

export function main(argv: string[]): number {
  const [command, ...rest] = argv
  try {
    switch (command) {
      case 'extract':
        return cmdExtract(rest)
      case 'lpips':
        return cmdLpips(rest)
      default:
        fail(`unknown command "${command ?? ''}"; use extract or lpips`)
    }
  } catch (err) {
    fail((err as Error).message)
  }
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)))
}
