import { execFileSync, spawnSync } from 'node:child_process';
import { mkdtempSync, readFileSync, writeFileSync, cpSync, rmSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import { afterAll, describe, expect, it } from 'vitest';

import { emitCorpus, emitVocabulary, listImages, readVocabularyInput } from '../src/emit.js';
import { DryRunEmbedder } from '../src/providers.js';
import type { AdapterConfig } from '../src/types.js';

const SAMPLE_IMAGES = join(__dirname, '..', 'sample_images');
const DIM = 16;
const scratch: string[] = [];

function tmp(): string {
  const dir = mkdtempSync(join(tmpdir(), 'adapter-test-'));
  scratch.push(dir);
  return dir;
}

afterAll(() => {
  for (const dir of scratch) rmSync(dir, { recursive: true, force: true });
});

function dryConfig(outDir: string, overrides: Partial<AdapterConfig> = {}): AdapterConfig {
  return {
    imageDir: SAMPLE_IMAGES,
    outDir,
    detector: 'yolo-v8-l',
    captioner: 'qwen2-vl-2b-instruct',
    embedder: 'clip-vit-b-32',
    confidenceFloor: 0.0,
    dim: DIM,
    seed: 7,
    dryRun: true,
    ...overrides,
  };
}

const VOCAB_INPUT = {
  concepts: [
    { name: 'car' },
    { name: 'pedestrian' },
    { name: 'truck' },
    { name: 'bicycle', aliases: ['bike'] },
    { name: 'motorcycle' },
    { name: 'barrier' },
  ],
  common: ['car', 'pedestrian'],
  target: ['bicycle', 'motorcycle'],
};

async function emitFullCorpus(outDir: string, overrides: Partial<AdapterConfig> = {}) {
  const result = await emitCorpus(dryConfig(outDir, overrides));
  await emitVocabulary(
    VOCAB_INPUT,
    new DryRunEmbedder(DIM, 7),
    join(outDir, 'vocabulary.json'),
    join(outDir, 'image_embeddings.json'),
  );
  return result;
}

describe('image listing', () => {
  it('finds the three sample images with image-per-scene ids', () => {
    const entries = listImages(SAMPLE_IMAGES);
    expect(entries.map((e) => e.imageId)).toEqual([
      'cam_front_000',
      'cam_front_001',
      'cam_left_000',
    ]);
    expect(entries.every((e) => e.sceneId === e.imageId)).toBe(true);
  });
});

describe('dry-run corpus emission', () => {
  it('row counts match detection counts across all emitted files', async () => {
    const out = tmp();
    const result = await emitFullCorpus(out);
    expect(result.imageCount).toBe(3);

    const cropLines = readFileSync(join(out, 'crops.jsonl'), 'utf-8').trim().split('\n');
    expect(cropLines.length).toBe(result.cropCount);

    const sidecar = JSON.parse(readFileSync(join(out, 'image_embeddings.json'), 'utf-8'));
    expect(sidecar.n_rows).toBe(result.cropCount);
    expect(sidecar.dim).toBe(DIM);
    expect(sidecar.kind).toBe('image');

    const binBytes = readFileSync(join(out, 'image_embeddings.bin')).length;
    expect(binBytes).toBe(result.cropCount * DIM * 4);

    const captionLines = readFileSync(join(out, 'captions.jsonl'), 'utf-8').trim().split('\n');
    expect(captionLines.length).toBe(result.cropCount);

    // sidecar row order is the crops emission order
    const cropIds = cropLines.map((l) => JSON.parse(l).object_id);
    expect(sidecar.row_ids).toEqual(cropIds);
  });

  it('passes the mining CLI validate command with exit 0', async () => {
    const out = tmp();
    await emitFullCorpus(out);
    const proc = spawnSync(
      'python3',
      ['-m', 'raremine.cli', 'validate', '--config', join(out, 'config.json')],
      { encoding: 'utf-8' },
    );
    expect(proc.stderr).toBe('');
    expect(proc.status).toBe(0);
    expect(proc.stdout).toContain('corpus valid');
  });

  it('emission is sorted by (image_id, bbox) and reruns are byte-identical', async () => {
    const a = tmp();
    const b = tmp();
    await emitFullCorpus(a);
    await emitFullCorpus(b);
    for (const name of [
      'crops.jsonl',
      'captions.jsonl',
      'image_embeddings.bin',
      'image_embeddings.json',
      'caption_embeddings.bin',
      'caption_embeddings.json',
      'vocabulary.json',
    ]) {
      expect(readFileSync(join(a, name))).toEqual(readFileSync(join(b, name)));
    }
    const crops = readFileSync(join(a, 'crops.jsonl'), 'utf-8')
      .trim()
      .split('\n')
      .map((l) => JSON.parse(l));
    const keys = crops.map((c) => [c.image_id, ...c.bbox]);
    const sorted = [...keys].sort((x, y) => {
      if (x[0] !== y[0]) return x[0] < y[0] ? -1 : 1;
      for (let i = 1; i < 5; i++) if (x[i] !== y[i]) return (x[i] as number) - (y[i] as number);
      return 0;
    });
    expect(keys).toEqual(sorted);
  });

  it('a high confidence floor excludes detections and logs them', async () => {
    const low = tmp();
    const high = tmp();
    const all = await emitCorpus(dryConfig(low, { confidenceFloor: 0.0 }));
    const filtered = await emitCorpus(dryConfig(high, { confidenceFloor: 0.9 }));
    expect(filtered.cropCount).toBeLessThan(all.cropCount);
    const log = readFileSync(join(high, 'skipped.log'), 'utf-8');
    expect(log).toContain('below-floor');
    const excluded = all.cropCount - filtered.cropCount;
    expect(log.split('\n').filter((l) => l.startsWith('below-floor')).length).toBe(excluded);
  });

  it('rejects an out-of-range confidence floor', async () => {
    await expect(emitCorpus(dryConfig(tmp(), { confidenceFloor: 1.5 }))).rejects.toThrow(
      /confidence floor/,
    );
  });

  it('groups subdirectory images into scenes', async () => {
    const nested = tmp();
    cpSync(SAMPLE_IMAGES, join(nested, 'scene_a'), { recursive: true });
    const entries = listImages(nested);
    expect(entries.every((e) => e.sceneId === 'scene_a')).toBe(true);
  });
});

describe('vocabulary emission', () => {
  it('writes one embedding per concept in corpus-compatible dims', async () => {
    const out = tmp();
    const path = join(out, 'vocab.json');
    await emitVocabulary(VOCAB_INPUT, new DryRunEmbedder(DIM, 7), path);
    const doc = JSON.parse(readFileSync(path, 'utf-8'));
    expect(doc.concepts.length).toBe(6);
    expect(doc.concepts.every((c: any) => c.embedding.length === DIM)).toBe(true);
    expect(doc.common).toEqual(['car', 'pedestrian']);
  });

  it('rejects duplicate concept names', async () => {
    const input = { concepts: [{ name: 'car' }, { name: 'car' }], common: [], target: [] };
    await expect(
      emitVocabulary(input, new DryRunEmbedder(DIM, 7), join(tmp(), 'v.json')),
    ).rejects.toThrow(/duplicate/);
  });

  it('rejects overlapping common and target sets', async () => {
    const input = {
      concepts: [{ name: 'car' }, { name: 'bicycle' }],
      common: ['car'],
      target: ['car'],
    };
    await expect(
      emitVocabulary(input, new DryRunEmbedder(DIM, 7), join(tmp(), 'v.json')),
    ).rejects.toThrow(/both common and target/);
  });

  it('rejects embedder dim mismatch against an existing corpus', async () => {
    const out = tmp();
    await emitCorpus(dryConfig(out));
    await expect(
      emitVocabulary(
        VOCAB_INPUT,
        new DryRunEmbedder(DIM + 4, 7),
        join(out, 'vocabulary.json'),
        join(out, 'image_embeddings.json'),
      ),
    ).rejects.toThrow(/dim/);
  });

  it('reads string-only concept input files', () => {
    const path = join(tmp(), 'input.json');
    writeFileSync(path, JSON.stringify({ concepts: ['car', 'bus'], common: [], target: [] }));
    const input = readVocabularyInput(path);
    expect(input.concepts).toEqual([{ name: 'car' }, { name: 'bus' }]);
  });
});

describe('built CLI', () => {
  it('emit-corpus --dry-run works end to end through node', async () => {
    const out = tmp();
    execFileSync('npx', ['tsc'], { cwd: join(__dirname, '..') });
    const run = (args: string[]) =>
      execFileSync('node', [join(__dirname, '..', 'dist', 'cli.js'), ...args], {
        encoding: 'utf-8',
      });
    const stdout = run([
      'emit-corpus', '--images', SAMPLE_IMAGES, '--out', out,
      '--dim', String(DIM), '--seed', '7', '--dry-run',
    ]);
    expect(stdout).toMatch(/emitted \d+ crops from 3 images/);
    const vocabInput = join(out, 'vocab_input.json');
    writeFileSync(vocabInput, JSON.stringify(VOCAB_INPUT));
    run([
      'emit-vocabulary', '--concepts', vocabInput, '--out', join(out, 'vocabulary.json'),
      '--dim', String(DIM), '--seed', '7', '--corpus-sidecar',
      join(out, 'image_embeddings.json'), '--dry-run',
    ]);
    const proc = spawnSync(
      'python3',
      ['-m', 'raremine.cli', 'validate', '--config', join(out, 'config.json')],
      { encoding: 'utf-8' },
    );
    expect(proc.status).toBe(0);
  }, 120_000);

  it('refuses live-model mode without a backend', async () => {
    await expect(emitCorpus(dryConfig(tmp(), { dryRun: false }))).rejects.toThrow(/backend/);
  });
});
