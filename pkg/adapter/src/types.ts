export interface AdapterConfig {
  /** directory scanned (non-recursively, then one level of subdirectories) for images */
  imageDir: string;
  detector: string;
  captioner: string;
  embedder: string;
  /** detections below this confidence are excluded and logged */
  confidenceFloor: number;
  outDir: string;
  /** embedding dimensionality emitted by the embedder */
  dim: number;
  /** seed for the dry-run providers */
  seed: number;
  dryRun: boolean;
}

export interface Detection {
  /** [x, y, w, h] in pixels */
  bbox: [number, number, number, number];
  detectorClass: string;
  confidence: number;
}

export interface CropOut {
  objectId: string;
  sceneId: string;
  imageId: string;
  bbox: [number, number, number, number];
  detectorClass: string;
  confidence: number;
  caption: string;
  imageEmbedding: Float32Array;
  captionEmbedding: Float32Array;
}

export interface ImageEntry {
  /** image id: file stem, unique within the corpus */
  imageId: string;
  /** scene id: parent subdirectory name, or the image id for flat layouts */
  sceneId: string;
  path: string;
}

export interface VocabularyInput {
  concepts: { name: string; aliases?: string[] }[];
  common: string[];
  target: string[];
}
