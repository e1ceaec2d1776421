export type LmlSource =
  | { kind: 'model'; modelDir: string }
  | { kind: 'file'; path: string }
  | { kind: 'synthetic'; accuracy: number; seed: number }

export interface ExportConfig {
  /** CIFAR-10 binary-format dataset (1 label byte + 3072 channel-planar pixel bytes per record). */
  datasetPath: string
  /** Directory holding the small model as tfjs-layers artifacts (model.json + weights.bin). */
  smallModelDir: string
  outPath: string
  lml: LmlSource
  /** Embed flattened [0,1] pixels (row-major, channels last) as `features`. */
  includeFeatures?: boolean
  batchSize?: number
  /** Export only the first N records. */
  limit?: number
  idPrefix?: string
}

export interface ExportResult {
  lines: number
  numClasses: number
  smlAccuracy: number
  lmlAccuracy: number
  outPath: string
  metadataPath: string
}
