import * as fs from 'fs'
import * as tf from '@tensorflow/tfjs'
import { readCifarBinary } from './cifar'
import { correctnessBits } from './lml'
import { loadLayersModelFromDir, predictProbs } from './model'
import { ExportConfig, ExportResult } from './types'

const PROB_SUM_TOL = 1e-6

function argmax(row: Float64Array): number {
  let best = 0
  for (let j = 1; j < row.length; j++) {
    if (row[j] > row[best]) best = j // ties keep the smallest index
  }
  return best
}

/** Validate one record against the trace schema; throws on violation. */
function validateRow(row: Float64Array, label: number, index: number): void {
  let sum = 0
  for (const v of row) {
    if (!Number.isFinite(v)) throw new Error(`record ${index}: non-finite probability`)
    if (v < -PROB_SUM_TOL || v > 1 + PROB_SUM_TOL) {
      throw new Error(`record ${index}: probability ${v} outside [0, 1]`)
    }
    sum += v
  }
  if (Math.abs(sum - 1) > PROB_SUM_TOL) {
    throw new Error(
      `record ${index}: probabilities sum to ${sum.toFixed(8)}; ` +
        'the small model must emit softmax outputs',
    )
  }
  if (!(label >= 0 && label < row.length)) {
    throw new Error(`record ${index}: label ${label} outside [0, ${row.length})`)
  }
}

/**
 * Run the small model over the dataset and write one trace line per sample.
 * Every line is schema-validated before anything is written; a sidecar
 * `<out>.meta.json` records the preprocessing choices.
 */
export async function exportTrace(config: ExportConfig): Promise<ExportResult> {
  await tf.setBackend('cpu')
  await tf.ready()
  const batchSize = config.batchSize ?? 256
  const dataset = readCifarBinary(config.datasetPath, config.limit)
  const model = await loadLayersModelFromDir(config.smallModelDir)
  const { probs, numClasses } = await predictProbs(
    model,
    dataset.images,
    dataset.count,
    [dataset.height, dataset.width, dataset.channels],
    batchSize,
  )
  if (numClasses < 2) {
    throw new Error(`model emits ${numClasses} outputs; need at least 2 classes`)
  }
  const lml = await correctnessBits(config.lml, dataset, batchSize)

  const prefix = config.idPrefix ?? 'test'
  const width = String(Math.max(dataset.count - 1, 0)).length
  const perImage = dataset.height * dataset.width * dataset.channels
  const lines: string[] = []
  let smlCorrect = 0
  let lmlCorrect = 0
  for (let i = 0; i < dataset.count; i++) {
    const row = new Float64Array(numClasses)
    for (let j = 0; j < numClasses; j++) row[j] = probs[i * numClasses + j]
    const label = dataset.labels[i]
    validateRow(row, label, i)
    // renormalize in float64 so downstream sums are exact
    let sum = 0
    for (const v of row) sum += v
    for (let j = 0; j < numClasses; j++) row[j] = Math.max(row[j], 0) / sum
    const pred = argmax(row)
    if (pred === label) smlCorrect++
    if (lml[i]) lmlCorrect++
    const record: Record<string, unknown> = {
      id: `${prefix}-${String(i).padStart(width, '0')}`,
      label,
      sml_probs: Array.from(row),
      sml_pred: pred,
      lml_correct: lml[i],
    }
    if (config.includeFeatures) {
      record.features = Array.from(dataset.images.subarray(i * perImage, (i + 1) * perImage))
    }
    lines.push(JSON.stringify(record))
  }

  fs.writeFileSync(config.outPath, lines.join('\n') + '\n')
  const metadataPath = `${config.outPath}.meta.json`
  const metadata = {
    dataset: config.datasetPath,
    dataset_format: 'cifar10-binary',
    records: dataset.count,
    num_classes: numClasses,
    small_model: config.smallModelDir,
    preprocessing: {
      pixel_scaling: '1/255',
      layout: 'row-major, channels-last (HWC)',
      input_shape: [dataset.height, dataset.width, dataset.channels],
    },
    lml_source: config.lml,
    features_embedded: Boolean(config.includeFeatures),
    sml_accuracy: smlCorrect / dataset.count,
    lml_accuracy: lmlCorrect / dataset.count,
  }
  fs.writeFileSync(metadataPath, JSON.stringify(metadata, null, 2) + '\n')

  const result: ExportResult = {
    lines: dataset.count,
    numClasses,
    smlAccuracy: smlCorrect / dataset.count,
    lmlAccuracy: lmlCorrect / dataset.count,
    outPath: config.outPath,
    metadataPath,
  }
  console.log(
    `exported ${result.lines} records (K=${numClasses}) to ${config.outPath}; ` +
      `small-model accuracy ${result.smlAccuracy.toFixed(4)}, ` +
      `large-model accuracy ${result.lmlAccuracy.toFixed(4)}`,
  )
  return result
}
