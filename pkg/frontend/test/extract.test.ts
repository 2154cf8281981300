import * as tf from '@tensorflow/tfjs';
import { spawnSync } from 'child_process';
import { mkdirSync, mkdtempSync, readFileSync, writeFileSync } from 'fs';
import { tmpdir } from 'os';
import { join } from 'path';
import { beforeAll, describe, expect, test } from 'vitest';

import { cliMain, extractFeatures, writeImagesNpy } from '../src/extract';
import {
    TopologyError, loadCheckpoint, resolveTapLayer, saveCheckpoint,
    truncateAt,
} from '../src/model';
import { readNpy } from '../src/npy';

const M = 10;       // images in the fixture
const CHANNELS = 12; // feature channels of the fixture architecture
const SPATIAL = 5;   // feature map size at the tap point

let root: string;
let checkpointDir: string;
let dataPath: string;
let model: tf.LayersModel;

/** Deterministic pseudo-random floats so the fixture images are stable. */
function lcgFloats(n: number, seed: number): Float32Array {
    const out = new Float32Array(n);
    let state = seed >>> 0;
    for (let i = 0; i < n; i++) {
        state = (1664525 * state + 1013904223) >>> 0;
        out[i] = state / 0xffffffff;
    }
    return out;
}

function buildFixtureModel(): tf.LayersModel {
    const m = tf.sequential();
    m.add(tf.layers.conv2d({
        inputShape: [16, 16, 3], filters: 8, kernelSize: 3,
        activation: 'relu',
    }));
    m.add(tf.layers.maxPooling2d({ poolSize: 2 }));
    m.add(tf.layers.conv2d({ filters: CHANNELS, kernelSize: 3 }));
    m.add(tf.layers.globalAveragePooling2d({}));
    m.add(tf.layers.dense({ units: 1, activation: 'sigmoid' }));
    return m;
}

function modelGapEmbedding(): Float32Array {
    const gap = model.layers.find(
        (l) => l.getClassName() === 'GlobalAveragePooling2D')!;
    const pooledModel = tf.model({
        inputs: model.inputs,
        outputs: gap.output as tf.SymbolicTensor,
    });
    const images = readNpy(dataPath);
    const out = pooledModel.predict(tf.tensor4d(
        Float32Array.from(images.data as Float32Array),
        [M, 16, 16, 3])) as tf.Tensor;
    return out.dataSync() as Float32Array;
}

function maxAbsDiff(a: ArrayLike<number>, b: ArrayLike<number>): number {
    let worst = 0;
    for (let i = 0; i < a.length; i++) {
        worst = Math.max(worst, Math.abs(a[i] - b[i]));
    }
    return worst;
}

beforeAll(async () => {
    root = mkdtempSync(join(tmpdir(), 'aled-extract-'));
    checkpointDir = join(root, 'checkpoint');
    model = buildFixtureModel();
    await saveCheckpoint(model, checkpointDir);
    dataPath = join(root, 'images.npy');
    writeImagesNpy(dataPath, lcgFloats(M * 16 * 16 * 3, 7), [M, 16, 16, 3]);
    writeFileSync(join(root, 'labels.csv'),
        Array.from({ length: M }, (_, i) => `${i % 2}`).join('\n') + '\n');
});

describe('checkpoint handling', () => {
    test('round-trips through the on-disk layout', async () => {
        const loaded = await loadCheckpoint(checkpointDir);
        const images = readNpy(dataPath);
        const x = tf.tensor4d(
            Float32Array.from(images.data as Float32Array), [M, 16, 16, 3]);
        const a = (model.predict(x) as tf.Tensor).dataSync();
        const b = (loaded.predict(x) as tf.Tensor).dataSync();
        expect(maxAbsDiff(a, b)).toBeLessThan(1e-6);
    });

    test('tap point is the last rank-4 layer before the classifier', () => {
        const tap = resolveTapLayer(model);
        expect(tap.getClassName()).toBe('Conv2D');
        const shape = tap.outputShape as Array<number | null>;
        expect(shape.slice(1)).toEqual([SPATIAL, SPATIAL, CHANNELS]);
    });

    test('model without a dense head is a topology error', () => {
        const headless = tf.sequential();
        headless.add(tf.layers.conv2d({
            inputShape: [8, 8, 1], filters: 4, kernelSize: 3,
        }));
        headless.add(tf.layers.globalAveragePooling2d({}));
        expect(() => resolveTapLayer(headless)).toThrow(TopologyError);
    });

    test('model without spatial features is a topology error', () => {
        const mlp = tf.sequential();
        mlp.add(tf.layers.dense({ units: 4, inputShape: [6] }));
        mlp.add(tf.layers.dense({ units: 1 }));
        expect(() => resolveTapLayer(mlp)).toThrow(TopologyError);
    });
});

describe('extraction', () => {
    test('exports channels-first rank-4 features plus labels', async () => {
        const outDir = join(root, 'out-main');
        mkdirSync(outDir, { recursive: true });
        const result = await extractFeatures({
            checkpoint: checkpointDir, data: dataPath, outDir,
        });
        expect(result.shape).toEqual([M, CHANNELS, SPATIAL, SPATIAL]);
        const arr = readNpy(result.featuresPath);
        expect(arr.descr).toBe('<f4');
        expect(arr.shape).toEqual([M, CHANNELS, SPATIAL, SPATIAL]);
        const labels = readFileSync(result.labelsPath, 'utf8').trim()
            .split('\n');
        expect(labels).toHaveLength(M);
    });

    test('pooling the export matches the model GAP embedding', async () => {
        const outDir = join(root, 'out-gap');
        mkdirSync(outDir, { recursive: true });
        const result = await extractFeatures({
            checkpoint: checkpointDir, data: dataPath, outDir,
        });
        const arr = readNpy(result.featuresPath);
        const flat = arr.data as Float32Array;
        const pooled = new Float32Array(M * CHANNELS);
        const area = SPATIAL * SPATIAL;
        for (let i = 0; i < M * CHANNELS; i++) {
            for (let k = 0; k < area; k++) {
                pooled[i] += flat[i * area + k];
            }
            pooled[i] /= area;
        }
        expect(maxAbsDiff(pooled, modelGapEmbedding())).toBeLessThan(1e-5);
    });

    test('extraction is deterministic', async () => {
        const dirA = join(root, 'out-det-a');
        const dirB = join(root, 'out-det-b');
        mkdirSync(dirA, { recursive: true });
        mkdirSync(dirB, { recursive: true });
        const a = await extractFeatures({
            checkpoint: checkpointDir, data: dataPath, outDir: dirA,
        });
        const b = await extractFeatures({
            checkpoint: checkpointDir, data: dataPath, outDir: dirB,
        });
        const fa = readNpy(a.featuresPath).data as Float32Array;
        const fb = readNpy(b.featuresPath).data as Float32Array;
        expect(maxAbsDiff(fa, fb)).toBeLessThan(1e-6);
    });

    test('batch size does not change the features', async () => {
        const dir1 = join(root, 'out-b1');
        const dir32 = join(root, 'out-b32');
        mkdirSync(dir1, { recursive: true });
        mkdirSync(dir32, { recursive: true });
        const a = await extractFeatures({
            checkpoint: checkpointDir, data: dataPath, outDir: dir1,
            batchSize: 1,
        });
        const b = await extractFeatures({
            checkpoint: checkpointDir, data: dataPath, outDir: dir32,
            batchSize: 32,
        });
        const fa = readNpy(a.featuresPath).data as Float32Array;
        const fb = readNpy(b.featuresPath).data as Float32Array;
        expect(maxAbsDiff(fa, fb)).toBeLessThan(1e-5);
    });

    test('--pooled exports the rank-2 embedding directly', async () => {
        const outDir = join(root, 'out-pooled');
        mkdirSync(outDir, { recursive: true });
        const result = await extractFeatures({
            checkpoint: checkpointDir, data: dataPath, outDir, pooled: true,
        });
        expect(result.shape).toEqual([M, CHANNELS]);
        const arr = readNpy(result.featuresPath);
        expect(maxAbsDiff(arr.data as Float32Array,
            modelGapEmbedding())).toBeLessThan(1e-5);
    });
});

describe('detector-core integration', () => {
    test('core pools the export to the documented channel count', async () => {
        const outDir = join(root, 'out-core');
        mkdirSync(outDir, { recursive: true });
        const result = await extractFeatures({
            checkpoint: checkpointDir, data: dataPath, outDir,
        });

        const pooledPath = join(outDir, 'pooled.npy');
        const pool = spawnSync('python3', [
            '-m', 'aled.cli', 'pool', '--in', result.featuresPath,
            '--out', pooledPath,
        ], { encoding: 'utf8' });
        expect(pool.status, pool.stderr).toBe(0);

        const pooled = readNpy(pooledPath);
        expect(pooled.descr).toBe('<f8');
        expect(pooled.shape).toEqual([M, CHANNELS]);
        expect(maxAbsDiff(pooled.data as Float64Array,
            modelGapEmbedding())).toBeLessThan(1e-5);

        const labels = spawnSync('python3', ['-c',
            'import sys; from aled.tensor_io import load_labels; ' +
            'print(len(load_labels(sys.argv[1])))',
            result.labelsPath], { encoding: 'utf8' });
        expect(labels.status, labels.stderr).toBe(0);
        expect(labels.stdout.trim()).toBe(String(M));
    });
});

describe('command line', () => {
    test('extract subcommand runs end to end', async () => {
        const outDir = join(root, 'out-cli');
        mkdirSync(outDir, { recursive: true });
        const code = await cliMain([
            'extract', '--checkpoint', checkpointDir, '--data', dataPath,
            '--out', outDir, '--batch', '4',
        ]);
        expect(code).toBe(0);
        expect(readNpy(join(outDir, 'features.npy')).shape)
            .toEqual([M, CHANNELS, SPATIAL, SPATIAL]);
    });

    test('missing flags are a usage error', async () => {
        expect(await cliMain(['extract', '--data', dataPath])).toBe(2);
        expect(await cliMain(['pool'])).toBe(2);
    });

    test('bad checkpoint is a runtime failure', async () => {
        const outDir = join(root, 'out-bad');
        mkdirSync(outDir, { recursive: true });
        const code = await cliMain([
            'extract', '--checkpoint', join(root, 'nope'), '--data', dataPath,
            '--out', outDir,
        ]);
        expect(code).toBe(3);
    });
});
