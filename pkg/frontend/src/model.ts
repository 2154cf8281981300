/**
 * Checkpoint loading and head removal.
 *
 * The tap point is the input to the final pooling/classifier head: the
 * output of the last layer that still carries a rank-4 (batch, H, W, C)
 * activation, searched backwards from the final Dense layer.
 */

import * as tf from '@tensorflow/tfjs';
import { readFileSync, writeFileSync, mkdirSync } from 'fs';
import { join } from 'path';

export class TopologyError extends Error {}

export async function loadCheckpoint(dir: string): Promise<tf.LayersModel> {
    const manifest = JSON.parse(readFileSync(join(dir, 'model.json'), 'utf8'));
    const groups: Array<{ paths: string[]; weights: tf.io.WeightsManifestEntry[] }> =
        manifest.weightsManifest;
    const weightSpecs = groups.flatMap((g) => g.weights);
    const shards = groups.flatMap((g) => g.paths)
        .map((p) => readFileSync(join(dir, p)));
    const weightData = new Uint8Array(
        shards.reduce((n, s) => n + s.byteLength, 0));
    let offset = 0;
    for (const shard of shards) {
        weightData.set(shard, offset);
        offset += shard.byteLength;
    }
    return tf.loadLayersModel(tf.io.fromMemory({
        modelTopology: manifest.modelTopology,
        weightSpecs,
        weightData: weightData.buffer,
    }));
}

export async function saveCheckpoint(model: tf.LayersModel,
                                     dir: string): Promise<void> {
    mkdirSync(dir, { recursive: true });
    await model.save(tf.io.withSaveHandler(async (artifacts) => {
        const weightsManifest = [{
            paths: ['weights.bin'],
            weights: artifacts.weightSpecs,
        }];
        writeFileSync(join(dir, 'weights.bin'),
            Buffer.from(artifacts.weightData as ArrayBuffer));
        writeFileSync(join(dir, 'model.json'), JSON.stringify({
            modelTopology: artifacts.modelTopology,
            format: 'layers-model',
            generatedBy: 'aled-extract fixture',
            convertedBy: null,
            weightsManifest,
        }));
        return {
            modelArtifactsInfo: {
                dateSaved: new Date(),
                modelTopologyType: 'JSON' as const,
            },
        };
    }));
}

function outputRank(layer: tf.layers.Layer): number {
    const shape = layer.outputShape;
    if (Array.isArray(shape[0])) {
        return 0; // multi-output layers are not part of a plain head
    }
    return (shape as Array<number | null>).length;
}

/** Output of the last rank-4 layer at or before the final Dense layer. */
export function resolveTapLayer(model: tf.LayersModel): tf.layers.Layer {
    const layers = model.layers;
    let classifier = -1;
    for (let i = layers.length - 1; i >= 0; i--) {
        if (layers[i].getClassName() === 'Dense') {
            classifier = i;
            break;
        }
    }
    if (classifier < 0) {
        throw new TopologyError(
            'no Dense classifier layer found; cannot identify the head');
    }
    for (let i = classifier - 1; i >= 0; i--) {
        if (outputRank(layers[i]) === 4) {
            return layers[i];
        }
    }
    throw new TopologyError(
        'no rank-4 feature layer found before the classifier');
}

export function truncateAt(model: tf.LayersModel,
                           layer: tf.layers.Layer): tf.LayersModel {
    return tf.model({
        inputs: model.inputs,
        outputs: layer.output as tf.SymbolicTensor,
    });
}
