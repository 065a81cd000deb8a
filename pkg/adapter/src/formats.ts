import { mkdirSync, writeFileSync } from 'node:fs';
import { join } from 'node:path';

import type { CropOut } from './types.js';

/**
 * Writers for the portable corpus files consumed by the mining library:
 * JSONL crops/captions, raw little-endian float32 matrices with JSON
 * sidecars, and the vocabulary document. Key order is fixed so reruns emit
 * byte-identical files.
 */

export function cropsJsonl(crops: CropOut[]): string {
  return crops
    .map((c) =>
      JSON.stringify({
        object_id: c.objectId,
        scene_id: c.sceneId,
        image_id: c.imageId,
        bbox: c.bbox,
        detector_class: c.detectorClass,
        detector_confidence: c.confidence,
      }),
    )
    .map((line) => line + '\n')
    .join('');
}

export function captionsJsonl(crops: CropOut[]): string {
  return crops
    .map((c, row) =>
      JSON.stringify({
        object_id: c.objectId,
        caption_text: c.caption,
        caption_embedding_row: row,
      }),
    )
    .map((line) => line + '\n')
    .join('');
}

export function embeddingBinary(rows: Float32Array[]): Buffer {
  if (rows.length === 0) return Buffer.alloc(0);
  const dim = rows[0].length;
  const buffer = Buffer.alloc(rows.length * dim * 4);
  rows.forEach((row, i) => {
    if (row.length !== dim) throw new Error(`row ${i} has dim ${row.length}, expected ${dim}`);
    for (let j = 0; j < dim; j++) buffer.writeFloatLE(row[j], (i * dim + j) * 4);
  });
  return buffer;
}

export function embeddingSidecar(
  rowIds: string[],
  dim: number,
  kind: 'image' | 'caption',
  sourceModel: string,
): string {
  const doc = {
    n_rows: rowIds.length,
    dim,
    kind,
    source_model: sourceModel,
    row_ids: rowIds,
  };
  return JSON.stringify(doc, null, 2) + '\n';
}

export interface VocabularyDoc {
  concepts: { name: string; aliases: string[]; embedding: number[] }[];
  common: string[];
  target: string[];
}

export function vocabularyJson(doc: VocabularyDoc): string {
  return JSON.stringify(doc, null, 2) + '\n';
}

export interface CorpusFiles {
  crops: string;
  imageEmbeddings: string;
  imageEmbeddingsSidecar: string;
  captions: string;
  captionEmbeddings: string;
  captionEmbeddingsSidecar: string;
  skipLog: string;
}

export function writeCorpusFiles(
  outDir: string,
  crops: CropOut[],
  embedderName: string,
  skipLogLines: string[],
): CorpusFiles {
  mkdirSync(outDir, { recursive: true });
  const paths: CorpusFiles = {
    crops: join(outDir, 'crops.jsonl'),
    imageEmbeddings: join(outDir, 'image_embeddings.bin'),
    imageEmbeddingsSidecar: join(outDir, 'image_embeddings.json'),
    captions: join(outDir, 'captions.jsonl'),
    captionEmbeddings: join(outDir, 'caption_embeddings.bin'),
    captionEmbeddingsSidecar: join(outDir, 'caption_embeddings.json'),
    skipLog: join(outDir, 'skipped.log'),
  };
  const rowIds = crops.map((c) => c.objectId);
  const dim = crops.length > 0 ? crops[0].imageEmbedding.length : 0;
  writeFileSync(paths.crops, cropsJsonl(crops));
  writeFileSync(paths.imageEmbeddings, embeddingBinary(crops.map((c) => c.imageEmbedding)));
  writeFileSync(paths.imageEmbeddingsSidecar, embeddingSidecar(rowIds, dim, 'image', embedderName));
  writeFileSync(paths.captions, captionsJsonl(crops));
  writeFileSync(paths.captionEmbeddings, embeddingBinary(crops.map((c) => c.captionEmbedding)));
  writeFileSync(paths.captionEmbeddingsSidecar, embeddingSidecar(rowIds, dim, 'caption', embedderName));
  writeFileSync(paths.skipLog, skipLogLines.map((l) => l + '\n').join(''));
  return paths;
}

/** Run config for the mining CLI, pointing at the emitted files. */
export function runConfigJson(vocabularyFile: string, seed: number): string {
  return (
    JSON.stringify(
      {
        corpus: {
          crops: 'crops.jsonl',
          image_embeddings: 'image_embeddings.bin',
          image_embeddings_sidecar: 'image_embeddings.json',
          captions: 'captions.jsonl',
          caption_embeddings: 'caption_embeddings.bin',
          caption_embeddings_sidecar: 'caption_embeddings.json',
        },
        vocabulary: vocabularyFile,
        out_dir: 'out',
        seed,
      },
      null,
      2,
    ) + '\n'
  );
}
