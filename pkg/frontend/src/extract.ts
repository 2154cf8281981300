/**
 * Batched feature extraction: forward every sample through the truncated
 * network and write the captured activations in the detector's tensor
 * formats (channels-first '<f4' NPY plus a labels CSV).
 */

import * as tf from '@tensorflow/tfjs';
import { copyFileSync, existsSync, renameSync, writeFileSync } from 'fs';
import { dirname, join } from 'path';

import { loadCheckpoint, resolveTapLayer, truncateAt } from './model';
import { readNpy, writeNpy } from './npy';

export class ShapeDriftError extends Error {}

export interface ExtractionJob {
    checkpoint: string;
    data: string;
    outDir: string;
    labels?: string;
    pooled?: boolean;
    batchSize?: number;
}

export interface ExtractionResult {
    featuresPath: string;
    labelsPath: string;
    shape: number[];
}

function loadImages(path: string): { data: Float32Array; shape: number[] } {
    const arr = readNpy(path);
    if (arr.shape.length !== 4) {
        throw new ShapeDriftError(
            `${path}: expected rank-4 image input (m, H, W, C), got rank ` +
            `${arr.shape.length}`);
    }
    if (arr.data instanceof BigInt64Array) {
        throw new ShapeDriftError(`${path}: image input must be float`);
    }
    return { data: Float32Array.from(arr.data), shape: arr.shape };
}

/** NHWC activations to channels-first (m, C, H, W), flattened C-order. */
function toChannelsFirst(flat: Float32Array, m: number, h: number, w: number,
                         c: number): Float32Array {
    const out = new Float32Array(flat.length);
    for (let i = 0; i < m; i++) {
        for (let y = 0; y < h; y++) {
            for (let x = 0; x < w; x++) {
                const base = ((i * h + y) * w + x) * c;
                for (let ch = 0; ch < c; ch++) {
                    out[((i * c + ch) * h + y) * w + x] = flat[base + ch];
                }
            }
        }
    }
    return out;
}

function spatialMean(flat: Float32Array, m: number, h: number, w: number,
                     c: number): Float32Array {
    const out = new Float32Array(m * c);
    const area = h * w;
    for (let i = 0; i < m; i++) {
        for (let y = 0; y < h; y++) {
            for (let x = 0; x < w; x++) {
                const base = ((i * h + y) * w + x) * c;
                for (let ch = 0; ch < c; ch++) {
                    out[i * c + ch] += flat[base + ch];
                }
            }
        }
    }
    for (let k = 0; k < out.length; k++) {
        out[k] /= area;
    }
    return out;
}

function resolveLabelsSource(job: ExtractionJob): string {
    const candidate = job.labels ?? join(dirname(job.data), 'labels.csv');
    if (!existsSync(candidate)) {
        throw new Error(
            `labels file not found at ${candidate}; pass --labels explicitly`);
    }
    return candidate;
}

function writeAtomic(path: string, write: (tmp: string) => void): void {
    const tmp = path + '.tmp';
    write(tmp);
    renameSync(tmp, path);
}

export async function extractFeatures(job: ExtractionJob):
        Promise<ExtractionResult> {
    const labelsSource = resolveLabelsSource(job);
    const images = loadImages(job.data);
    const [m, height, width, channels] = images.shape;
    const batchSize = job.batchSize ?? 32;

    const model = await loadCheckpoint(job.checkpoint);
    const truncated = truncateAt(model, resolveTapLayer(model));

    let featShape: number[] | null = null;
    const chunks: Float32Array[] = [];
    for (let start = 0; start < m; start += batchSize) {
        const count = Math.min(batchSize, m - start);
        const view = images.data.subarray(
            start * height * width * channels,
            (start + count) * height * width * channels);
        const out = tf.tidy(() => truncated.predict(
            tf.tensor4d(view, [count, height, width, channels]),
            { batchSize: count }) as tf.Tensor);
        const outShape = out.shape.slice(1);
        if (featShape === null) {
            featShape = outShape;
        } else if (JSON.stringify(outShape) !== JSON.stringify(featShape)) {
            throw new ShapeDriftError(
                `batch at ${start} produced shape [${outShape}], expected ` +
                `[${featShape}]`);
        }
        chunks.push(await out.data() as Float32Array);
        out.dispose();
    }
    const [fh, fw, fc] = [featShape![0], featShape![1], featShape![2]];
    const flat = new Float32Array(m * fh * fw * fc);
    let offset = 0;
    for (const chunk of chunks) {
        flat.set(chunk, offset);
        offset += chunk.length;
    }

    const featuresPath = join(job.outDir, 'features.npy');
    const labelsPath = join(job.outDir, 'labels.csv');
    let shape: number[];
    if (job.pooled) {
        shape = [m, fc];
        const pooled = spatialMean(flat, m, fh, fw, fc);
        writeAtomic(featuresPath, (tmp) =>
            writeNpy(tmp, { descr: '<f4', shape, data: pooled }));
    } else {
        shape = [m, fc, fh, fw];
        const nchw = toChannelsFirst(flat, m, fh, fw, fc);
        writeAtomic(featuresPath, (tmp) =>
            writeNpy(tmp, { descr: '<f4', shape, data: nchw }));
    }
    writeAtomic(labelsPath, (tmp) => copyFileSync(labelsSource, tmp));
    return { featuresPath, labelsPath, shape };
}

export function writeImagesNpy(path: string, data: Float32Array,
                               shape: number[]): void {
    writeNpy(path, { descr: '<f4', shape, data });
}

function usage(): string {
    return 'usage: aled-extract extract --checkpoint DIR --data IMAGES.npy ' +
        '--out DIR [--labels FILE] [--pooled] [--batch N]';
}

export async function cliMain(argv: string[]): Promise<number> {
    if (argv[0] !== 'extract') {
        console.error(usage());
        return 2;
    }
    const job: Partial<ExtractionJob> = {};
    for (let i = 1; i < argv.length; i++) {
        switch (argv[i]) {
            case '--checkpoint':
                job.checkpoint = argv[++i];
                break;
            case '--data':
                job.data = argv[++i];
                break;
            case '--out':
                job.outDir = argv[++i];
                break;
            case '--labels':
                job.labels = argv[++i];
                break;
            case '--pooled':
                job.pooled = true;
                break;
            case '--batch':
                job.batchSize = parseInt(argv[++i], 10);
                break;
            default:
                console.error(`unknown flag ${argv[i]}\n${usage()}`);
                return 2;
        }
    }
    if (!job.checkpoint || !job.data || !job.outDir) {
        console.error(usage());
        return 2;
    }
    try {
        const result = await extractFeatures(job as ExtractionJob);
        console.error(
            `wrote ${result.featuresPath} shape (${result.shape.join(', ')})`);
        return 0;
    } catch (err) {
        console.error(`extraction failed: ${err}`);
        return 3;
    }
}
