import { readdirSync, statSync, readFileSync, writeFileSync, mkdirSync } from 'node:fs';
import { basename, dirname, extname, join } from 'node:path';

import { writeCorpusFiles, vocabularyJson, runConfigJson, type CorpusFiles } from './formats.js';
import { makeProviders, type Embedder } from './providers.js';
import type { AdapterConfig, CropOut, Detection, ImageEntry, VocabularyInput } from './types.js';

const IMAGE_EXTENSIONS = new Set(['.png', '.jpg', '.jpeg', '.bmp', '.webp']);

export function listImages(imageDir: string): ImageEntry[] {
  const entries: ImageEntry[] = [];
  const walk = (dir: string, depth: number) => {
    for (const name of readdirSync(dir).sort()) {
      const path = join(dir, name);
      const stat = statSync(path);
      if (stat.isDirectory()) {
        if (depth === 0) walk(path, 1); // one level of scene subdirectories
        continue;
      }
      if (!IMAGE_EXTENSIONS.has(extname(name).toLowerCase())) continue;
      const imageId = basename(name, extname(name));
      const sceneId = depth === 1 ? basename(dirname(path)) : imageId;
      entries.push({ imageId, sceneId, path });
    }
  };
  walk(imageDir, 0);
  const seen = new Set<string>();
  for (const e of entries) {
    if (seen.has(e.imageId)) throw new Error(`duplicate image id ${e.imageId} under ${imageDir}`);
    seen.add(e.imageId);
  }
  return entries;
}

function bboxKey(bbox: [number, number, number, number]): string {
  return bbox.map((v) => v.toFixed(6).padStart(14, '0')).join(',');
}

export interface EmitResult {
  files: CorpusFiles;
  cropCount: number;
  imageCount: number;
  skipped: string[];
}

/**
 * Detect, caption, and embed every image under the configured directory and
 * write the portable corpus. Emission order is sorted (image_id, bbox) so
 * identical inputs and deterministic models reproduce identical files.
 * Below-floor detections and zero-detection images land in skipped.log.
 */
export async function emitCorpus(config: AdapterConfig): Promise<EmitResult> {
  if (!(config.confidenceFloor >= 0 && config.confidenceFloor <= 1)) {
    throw new Error(`confidence floor must lie in [0,1], got ${config.confidenceFloor}`);
  }
  const images = listImages(config.imageDir);
  if (images.length === 0) throw new Error(`no images found under ${config.imageDir}`);
  const { detector, captioner, embedder } = makeProviders(config);

  const skipped: string[] = [];
  const kept: { image: ImageEntry; detection: Detection }[] = [];
  for (const image of images) {
    const detections = await detector.detect(image.path);
    const passing = detections.filter((d) => d.confidence >= config.confidenceFloor);
    for (const d of detections) {
      if (d.confidence < config.confidenceFloor) {
        skipped.push(
          `below-floor ${image.imageId} ${d.detectorClass} confidence=${d.confidence.toFixed(4)}`,
        );
      }
    }
    if (passing.length === 0) {
      skipped.push(`no-detections ${image.imageId}`);
      continue;
    }
    for (const detection of passing) kept.push({ image, detection });
  }

  kept.sort((a, b) => {
    if (a.image.imageId !== b.image.imageId) return a.image.imageId < b.image.imageId ? -1 : 1;
    const ka = bboxKey(a.detection.bbox);
    const kb = bboxKey(b.detection.bbox);
    return ka < kb ? -1 : ka > kb ? 1 : 0;
  });

  const perImageCounter = new Map<string, number>();
  const crops: CropOut[] = [];
  for (const { image, detection } of kept) {
    const k = perImageCounter.get(image.imageId) ?? 0;
    perImageCounter.set(image.imageId, k + 1);
    const caption = await captioner.caption(image.path, detection);
    crops.push({
      objectId: `${image.imageId}_obj${String(k).padStart(3, '0')}`,
      sceneId: image.sceneId,
      imageId: image.imageId,
      bbox: detection.bbox,
      detectorClass: detection.detectorClass,
      confidence: detection.confidence,
      caption,
      imageEmbedding: await embedder.embedImage(image.path, detection.bbox),
      captionEmbedding: await embedder.embedText(caption),
    });
  }

  const files = writeCorpusFiles(config.outDir, crops, embedder.name, skipped);
  writeFileSync(join(config.outDir, 'config.json'), runConfigJson('vocabulary.json', config.seed));
  return { files, cropCount: crops.length, imageCount: images.length, skipped };
}

export function readVocabularyInput(path: string): VocabularyInput {
  const doc = JSON.parse(readFileSync(path, 'utf-8'));
  if (!Array.isArray(doc.concepts) || doc.concepts.length === 0) {
    throw new Error(`${path}: vocabulary input needs a non-empty 'concepts' list`);
  }
  return {
    concepts: doc.concepts.map((c: any) =>
      typeof c === 'string' ? { name: c } : { name: String(c.name), aliases: c.aliases ?? [] },
    ),
    common: (doc.common ?? []).map(String),
    target: (doc.target ?? []).map(String),
  };
}

function corpusDim(sidecarPath: string): number {
  return JSON.parse(readFileSync(sidecarPath, 'utf-8')).dim;
}

/**
 * Embed every concept name and write the vocabulary file. Rejects duplicate
 * names, overlapping common/target sets, and (when an existing corpus sidecar
 * is given) embedder dimensions that do not match the corpus.
 */
export async function emitVocabulary(
  input: VocabularyInput,
  embedder: Embedder,
  outPath: string,
  corpusSidecarPath?: string,
): Promise<void> {
  const names = new Set<string>();
  for (const { name } of input.concepts) {
    if (names.has(name)) throw new Error(`duplicate concept name '${name}'`);
    names.add(name);
  }
  const overlap = input.common.filter((n) => input.target.includes(n));
  if (overlap.length > 0) {
    throw new Error(`concepts in both common and target sets: ${overlap.join(', ')}`);
  }
  for (const role of ['common', 'target'] as const) {
    for (const name of input[role]) {
      if (!names.has(name)) throw new Error(`${role} set names missing from vocabulary: ${name}`);
    }
  }
  if (corpusSidecarPath !== undefined) {
    const dim = corpusDim(corpusSidecarPath);
    if (dim !== embedder.dim) {
      throw new Error(`embedder dim ${embedder.dim} does not match corpus dim ${dim}`);
    }
  }
  const concepts = [];
  for (const { name, aliases } of input.concepts) {
    const embedding = await embedder.embedText(name.replace(/_/g, ' '));
    concepts.push({ name, aliases: aliases ?? [], embedding: Array.from(embedding) });
  }
  mkdirSync(dirname(outPath), { recursive: true });
  writeFileSync(outPath, vocabularyJson({ concepts, common: input.common, target: input.target }));
}
