import * as fs from 'fs'

export const CIFAR_HEIGHT = 32
export const CIFAR_WIDTH = 32
export const CIFAR_CHANNELS = 3
export const CIFAR_PIXELS = CIFAR_HEIGHT * CIFAR_WIDTH * CIFAR_CHANNELS
export const CIFAR_RECORD_BYTES = 1 + CIFAR_PIXELS // label byte + channel planes

export interface Dataset {
  count: number
  height: number
  width: number
  channels: number
  labels: Uint8Array
  /** HWC row-major pixels scaled to [0, 1], count * 32 * 32 * 3 floats. */
  images: Float32Array
}

/**
 * Read a CIFAR-10 "binary version" batch file. Each record stores the label
 * followed by 1024 red, 1024 green and 1024 blue bytes (row-major planes);
 * output pixels are interleaved to channels-last and scaled by 1/255.
 */
export function readCifarBinary(path: string, limit?: number): Dataset {
  if (!fs.existsSync(path)) {
    throw new Error(`dataset file not found: ${path}`)
  }
  const raw = fs.readFileSync(path)
  if (raw.length === 0 || raw.length % CIFAR_RECORD_BYTES !== 0) {
    throw new Error(
      `dataset size ${raw.length} is not a multiple of the ${CIFAR_RECORD_BYTES}-byte record`,
    )
  }
  let count = raw.length / CIFAR_RECORD_BYTES
  if (limit !== undefined) {
    count = Math.min(count, limit)
  }
  const labels = new Uint8Array(count)
  const images = new Float32Array(count * CIFAR_PIXELS)
  const plane = CIFAR_HEIGHT * CIFAR_WIDTH
  for (let i = 0; i < count; i++) {
    const base = i * CIFAR_RECORD_BYTES
    labels[i] = raw[base]
    const out = i * CIFAR_PIXELS
    for (let p = 0; p < plane; p++) {
      for (let c = 0; c < CIFAR_CHANNELS; c++) {
        images[out + p * CIFAR_CHANNELS + c] = raw[base + 1 + c * plane + p] / 255
      }
    }
  }
  return {
    count,
    height: CIFAR_HEIGHT,
    width: CIFAR_WIDTH,
    channels: CIFAR_CHANNELS,
    labels,
    images,
  }
}
