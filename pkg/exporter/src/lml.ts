import * as fs from 'fs'
import { Dataset } from './cifar'
import { loadLayersModelFromDir, predictProbs } from './model'
import { LmlSource } from './types'

/** Small deterministic PRNG; good enough for seeded correctness bits. */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0
  return () => {
    a = (a + 0x6d2b79f5) >>> 0
    let t = a
    t = Math.imul(t ^ (t >>> 15), t | 1)
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61)
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296
  }
}

export function parseCorrectnessFile(path: string, expected: number): boolean[] {
  if (!fs.existsSync(path)) {
    throw new Error(`correctness file not found: ${path}`)
  }
  const text = fs.readFileSync(path, 'utf-8').trim()
  const bits: boolean[] = []
  if (text.startsWith('[')) {
    for (const v of JSON.parse(text)) {
      bits.push(v === true || v === 1 || v === '1')
    }
  } else {
    for (const line of text.split(/\r?\n/)) {
      const token = line.trim()
      if (!token) continue
      if (token === '1' || token === 'true') bits.push(true)
      else if (token === '0' || token === 'false') bits.push(false)
      else throw new Error(`correctness file: unrecognized token ${JSON.stringify(token)}`)
    }
  }
  if (bits.length < expected) {
    throw new Error(`correctness file has ${bits.length} bits, need ${expected}`)
  }
  return bits.slice(0, expected)
}

export async function correctnessBits(
  source: LmlSource,
  dataset: Dataset,
  batchSize: number,
): Promise<boolean[]> {
  if (source.kind === 'synthetic') {
    if (!(source.accuracy > 0 && source.accuracy <= 1)) {
      throw new Error(`synthetic accuracy must be in (0, 1], got ${source.accuracy}`)
    }
    const rand = mulberry32(source.seed)
    return Array.from({ length: dataset.count }, () => rand() < source.accuracy)
  }
  if (source.kind === 'file') {
    return parseCorrectnessFile(source.path, dataset.count)
  }
  const model = await loadLayersModelFromDir(source.modelDir)
  const { probs, numClasses } = await predictProbs(
    model,
    dataset.images,
    dataset.count,
    [dataset.height, dataset.width, dataset.channels],
    batchSize,
  )
  const bits: boolean[] = []
  for (let i = 0; i < dataset.count; i++) {
    let best = 0
    for (let j = 1; j < numClasses; j++) {
      if (probs[i * numClasses + j] > probs[i * numClasses + best]) best = j
    }
    bits.push(best === dataset.labels[i])
  }
  return bits
}
