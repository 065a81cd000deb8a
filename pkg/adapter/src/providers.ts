import { readFileSync } from 'node:fs';
import { createHash } from 'node:crypto';

import { streamFor } from './rng.js';
import type { Detection } from './types.js';

export interface Detector {
  detect(imagePath: string): Promise<Detection[]>;
}

export interface Captioner {
  /** class-primed captioning: the detector class seeds the prompt */
  caption(imagePath: string, detection: Detection): Promise<string>;
}

export interface Embedder {
  readonly dim: number;
  readonly name: string;
  embedImage(imagePath: string, bbox: [number, number, number, number]): Promise<Float32Array>;
  embedText(text: string): Promise<Float32Array>;
}

const DRY_RUN_CLASSES = ['car', 'pedestrian', 'truck', 'bicycle', 'motorcycle', 'barrier'];

// Captions mention the detector class so downstream caption parsing has a
// whole-word hit; a real captioner is prompted with the class for the same reason.
const CAPTION_TEMPLATES = [
  (c: string) => `a photo of a ${c} on the road`,
  (c: string) => `a ${c} near the ego vehicle`,
  (c: string) => `street scene showing a ${c} at daytime`,
];

function imageDigest(imagePath: string): string {
  return createHash('sha256').update(readFileSync(imagePath)).digest('hex');
}

/**
 * Placeholder providers: schema-valid detections, captions, and embeddings
 * derived deterministically from the image bytes. No model is loaded; the
 * emitted corpus exercises the full file contract.
 */
export class DryRunDetector implements Detector {
  constructor(private readonly seed: number) {}

  async detect(imagePath: string): Promise<Detection[]> {
    const stream = streamFor('detect', this.seed, imageDigest(imagePath));
    const count = 1 + stream.nextInt(3);
    const detections: Detection[] = [];
    for (let i = 0; i < count; i++) {
      const x = Math.fround(stream.nextFloat() * 1200);
      const y = Math.fround(stream.nextFloat() * 700);
      const w = Math.fround(20 + stream.nextFloat() * 400);
      const h = Math.fround(20 + stream.nextFloat() * 300);
      detections.push({
        bbox: [x, y, w, h],
        detectorClass: DRY_RUN_CLASSES[stream.nextInt(DRY_RUN_CLASSES.length)],
        confidence: Math.fround(0.2 + stream.nextFloat() * 0.8),
      });
    }
    return detections;
  }
}

export class DryRunCaptioner implements Captioner {
  constructor(private readonly seed: number) {}

  async caption(imagePath: string, detection: Detection): Promise<string> {
    const stream = streamFor('caption', this.seed, imageDigest(imagePath), ...detection.bbox);
    const template = CAPTION_TEMPLATES[stream.nextInt(CAPTION_TEMPLATES.length)];
    return template(detection.detectorClass.replace(/_/g, ' '));
  }
}

export class DryRunEmbedder implements Embedder {
  readonly name: string;

  constructor(readonly dim: number, private readonly seed: number) {
    this.name = `dry-run-embedder-d${dim}`;
  }

  async embedImage(imagePath: string, bbox: [number, number, number, number]): Promise<Float32Array> {
    return streamFor('embed-image', this.seed, imageDigest(imagePath), ...bbox).nextVector(this.dim);
  }

  async embedText(text: string): Promise<Float32Array> {
    return streamFor('embed-text', this.seed, text).nextVector(this.dim);
  }
}

export class ModelUnavailableError extends Error {}

export function makeProviders(config: {
  detector: string;
  captioner: string;
  embedder: string;
  dim: number;
  seed: number;
  dryRun: boolean;
}): { detector: Detector; captioner: Captioner; embedder: Embedder } {
  if (config.dryRun) {
    return {
      detector: new DryRunDetector(config.seed),
      captioner: new DryRunCaptioner(config.seed),
      embedder: new DryRunEmbedder(config.dim, config.seed),
    };
  }
  // Live backends (YOLO-style detector, VLM captioner, CLIP-style embedder)
  // plug in here; none ship with the adapter itself.
  throw new ModelUnavailableError(
    `no local backend for detector=${config.detector} captioner=${config.captioner} ` +
      `embedder=${config.embedder}; install a backend or pass --dry-run`,
  );
}
