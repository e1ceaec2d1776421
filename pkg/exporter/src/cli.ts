import { parseArgs } from 'node:util'
import { exportTrace } from './export'
import { ExportConfig, LmlSource } from './types'

const USAGE = `usage: node dist/cli.js --dataset <test_batch.bin> --small-model <dir> --out <trace.jsonl>
                   (--lml-model <dir> | --lml-file <bits.txt> | --lml-acc <p> [--lml-seed <n>])
                   [--features] [--batch-size <n>] [--limit <n>] [--id-prefix <s>]

Runs the small model over a CIFAR-10 binary batch and writes a JSON-Lines
inference trace (one line per sample) plus a <out>.meta.json sidecar. The
large-model correctness bit comes from exactly one of: a second model, a
0/1-per-line file, or a seeded Bernoulli with the given accuracy.`

export function buildConfig(argv: string[]): ExportConfig {
  const { values } = parseArgs({
    args: argv,
    options: {
      dataset: { type: 'string' },
      'small-model': { type: 'string' },
      out: { type: 'string' },
      'lml-model': { type: 'string' },
      'lml-file': { type: 'string' },
      'lml-acc': { type: 'string' },
      'lml-seed': { type: 'string', default: '0' },
      features: { type: 'boolean', default: false },
      'batch-size': { type: 'string', default: '256' },
      limit: { type: 'string' },
      'id-prefix': { type: 'string', default: 'test' },
      help: { type: 'boolean', default: false },
    },
  })
  if (values.help) {
    console.log(USAGE)
    process.exit(0)
  }
  for (const key of ['dataset', 'small-model', 'out'] as const) {
    if (!values[key]) throw new Error(`missing required --${key}`)
  }
  const sources = [values['lml-model'], values['lml-file'], values['lml-acc']]
  if (sources.filter((s) => s !== undefined).length !== 1) {
    throw new Error('exactly one of --lml-model, --lml-file, --lml-acc is required')
  }
  let lml: LmlSource
  if (values['lml-model']) {
    lml = { kind: 'model', modelDir: values['lml-model'] }
  } else if (values['lml-file']) {
    lml = { kind: 'file', path: values['lml-file'] }
  } else {
    const accuracy = Number(values['lml-acc'])
    if (!Number.isFinite(accuracy)) throw new Error(`--lml-acc must be a number`)
    lml = { kind: 'synthetic', accuracy, seed: Number(values['lml-seed']) }
  }
  const config: ExportConfig = {
    datasetPath: values.dataset!,
    smallModelDir: values['small-model']!,
    outPath: values.out!,
    lml,
    includeFeatures: values.features,
    batchSize: Number(values['batch-size']),
    idPrefix: values['id-prefix'],
  }
  if (values.limit !== undefined) {
    const limit = Number(values.limit)
    if (!Number.isInteger(limit) || limit < 1) throw new Error('--limit must be a positive integer')
    config.limit = limit
  }
  return config
}

async function main(): Promise<number> {
  let config: ExportConfig
  try {
    config = buildConfig(process.argv.slice(2))
  } catch (err) {
    console.error(`error: ${(err as Error).message}`)
    console.error(USAGE)
    return 2
  }
  try {
    await exportTrace(config)
    return 0
  } catch (err) {
    const message = (err as Error).message
    console.error(`error: ${message}`)
    // input-shaped problems are usage errors, the rest internal
    return /not found|outside|sum to|record |must|missing|unrecognized/.test(message) ? 2 : 1
  }
}

if (require.main === module) {
  main().then((code) => process.exit(code))
}
