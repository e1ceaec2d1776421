import * as fs from 'fs'
import * as path from 'path'
import * as tf from '@tensorflow/tfjs'

/**
 * File-system persistence for tfjs-layers artifacts without tfjs-node: the
 * directory holds model.json (topology + weightsManifest) and the weight
 * binaries it references, the same layout tfjs-node's file handler writes.
 */
export async function saveLayersModelToDir(model: tf.LayersModel, dir: string): Promise<void> {
  fs.mkdirSync(dir, { recursive: true })
  await model.save(
    tf.io.withSaveHandler(async (artifacts) => {
      const weightData = artifacts.weightData as ArrayBuffer
      fs.writeFileSync(path.join(dir, 'weights.bin'), Buffer.from(weightData))
      const manifest = [{ paths: ['weights.bin'], weights: artifacts.weightSpecs }]
      const modelJson = {
        modelTopology: artifacts.modelTopology,
        format: 'layers-model',
        generatedBy: 'higate-exporter',
        convertedBy: null,
        weightsManifest: manifest,
      }
      fs.writeFileSync(path.join(dir, 'model.json'), JSON.stringify(modelJson))
      return { modelArtifactsInfo: { dateSaved: new Date(), modelTopologyType: 'JSON' } }
    }),
  )
}

export async function loadLayersModelFromDir(dir: string): Promise<tf.LayersModel> {
  const jsonPath = path.join(dir, 'model.json')
  if (!fs.existsSync(jsonPath)) {
    throw new Error(`model directory missing model.json: ${dir}`)
  }
  const modelJson = JSON.parse(fs.readFileSync(jsonPath, 'utf-8'))
  const weightSpecs: tf.io.WeightsManifestEntry[] = []
  const buffers: Buffer[] = []
  for (const group of modelJson.weightsManifest ?? []) {
    weightSpecs.push(...group.weights)
    for (const rel of group.paths) {
      buffers.push(fs.readFileSync(path.join(dir, rel)))
    }
  }
  const joined = Buffer.concat(buffers)
  const weightData = joined.buffer.slice(joined.byteOffset, joined.byteOffset + joined.byteLength)
  return tf.loadLayersModel(
    tf.io.fromMemory({
      modelTopology: modelJson.modelTopology,
      weightSpecs,
      weightData,
    }),
  )
}

/** Batched class-probability prediction over HWC image data. */
export async function predictProbs(
  model: tf.LayersModel,
  images: Float32Array,
  count: number,
  shape: [number, number, number],
  batchSize = 256,
): Promise<{ probs: Float32Array; numClasses: number }> {
  const [h, w, c] = shape
  const perImage = h * w * c
  let numClasses = -1
  let out: Float32Array | null = null
  for (let start = 0; start < count; start += batchSize) {
    const n = Math.min(batchSize, count - start)
    const slice = images.subarray(start * perImage, (start + n) * perImage)
    const result = tf.tidy(() => {
      const x = tf.tensor4d(slice, [n, h, w, c])
      return model.predict(x, { batchSize: n }) as tf.Tensor
    })
    const data = (await result.data()) as Float32Array
    result.dispose()
    const k = data.length / n
    if (!Number.isInteger(k)) {
      throw new Error(`model output size ${data.length} not divisible by batch ${n}`)
    }
    if (numClasses === -1) {
      numClasses = k
      out = new Float32Array(count * k)
    } else if (k !== numClasses) {
      throw new Error(`inconsistent model output width: ${k} vs ${numClasses}`)
    }
    out!.set(data, start * k)
  }
  if (out === null) {
    throw new Error('empty dataset')
  }
  return { probs: out, numClasses }
}
