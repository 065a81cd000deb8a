#!/usr/bin/env node
import yargs from 'yargs';
import { hideBin } from 'yargs/helpers';

import { emitCorpus, emitVocabulary, readVocabularyInput } from './emit.js';
import { makeProviders } from './providers.js';

await yargs(hideBin(process.argv))
  .scriptName('raremine-adapter')
  .command(
    'emit-corpus',
    'run detector/captioner/embedder over an image directory and write the corpus files',
    (y) =>
      y
        .option('images', { type: 'string', demandOption: true, describe: 'image directory' })
        .option('out', { type: 'string', demandOption: true, describe: 'output directory' })
        .option('detector', { type: 'string', default: 'yolo-v8-l' })
        .option('captioner', { type: 'string', default: 'qwen2-vl-2b-instruct' })
        .option('embedder', { type: 'string', default: 'clip-vit-b-32' })
        .option('confidence-floor', { type: 'number', default: 0.25 })
        .option('dim', { type: 'number', default: 512, describe: 'embedding dimensionality' })
        .option('seed', { type: 'number', default: 0 })
        .option('dry-run', {
          type: 'boolean',
          default: false,
          describe: 'emit schema-valid placeholder embeddings without loading models',
        }),
    async (argv) => {
      const result = await emitCorpus({
        imageDir: argv.images,
        outDir: argv.out,
        detector: argv.detector,
        captioner: argv.captioner,
        embedder: argv.embedder,
        confidenceFloor: argv['confidence-floor'],
        dim: argv.dim,
        seed: argv.seed,
        dryRun: argv['dry-run'],
      });
      console.log(
        `emitted ${result.cropCount} crops from ${result.imageCount} images -> ${argv.out}`,
      );
      if (result.skipped.length > 0) {
        console.log(`${result.skipped.length} skip-log entries (see skipped.log)`);
      }
    },
  )
  .command(
    'emit-vocabulary',
    'embed a concept list and write the vocabulary file',
    (y) =>
      y
        .option('concepts', {
          type: 'string',
          demandOption: true,
          describe: 'JSON file with concepts[], common[], target[]',
        })
        .option('out', { type: 'string', demandOption: true, describe: 'output vocabulary path' })
        .option('embedder', { type: 'string', default: 'clip-vit-b-32' })
        .option('dim', { type: 'number', default: 512 })
        .option('seed', { type: 'number', default: 0 })
        .option('corpus-sidecar', {
          type: 'string',
          describe: 'existing embedding sidecar to check dimensions against',
        })
        .option('dry-run', { type: 'boolean', default: false }),
    async (argv) => {
      const { embedder } = makeProviders({
        detector: 'none',
        captioner: 'none',
        embedder: argv.embedder,
        dim: argv.dim,
        seed: argv.seed,
        dryRun: argv['dry-run'],
      });
      await emitVocabulary(
        readVocabularyInput(argv.concepts),
        embedder,
        argv.out,
        argv['corpus-sidecar'],
      );
      console.log(`vocabulary -> ${argv.out}`);
    },
  )
  .demandCommand(1)
  .strict()
  .fail((msg, err) => {
    console.error(err?.message ?? msg);
    process.exit(err ? 1 : 2);
  })
  .parseAsync();
