/**
 * Minimal NPY v1.0 reader/writer covering the dtypes the detector's
 * tensor files use: '<f4' and '<f8' for features, '<i8' for labels.
 * C-order only; the header is padded so the data block starts on a
 * 64-byte boundary, matching the reference layout.
 */

import { readFileSync, writeFileSync } from 'fs';

const MAGIC = Buffer.from('\x93NUMPY', 'latin1');

export type NpyDescr = '<f4' | '<f8' | '<i8';
export type NpyData = Float32Array | Float64Array | BigInt64Array;

export interface NpyArray {
    descr: NpyDescr;
    shape: number[];
    data: NpyData;
}

function headerFor(descr: NpyDescr, shape: number[]): Buffer {
    const shapeRepr =
        shape.length === 1 ? `(${shape[0]},)` : `(${shape.join(', ')})`;
    let dict = `{'descr': '${descr}', 'fortran_order': False, 'shape': ${shapeRepr}, }`;
    const unpadded = MAGIC.length + 2 + 2 + dict.length + 1;
    const total = Math.ceil(unpadded / 64) * 64;
    dict = dict.padEnd(dict.length + (total - unpadded), ' ') + '\n';
    const header = Buffer.alloc(total);
    MAGIC.copy(header, 0);
    header[6] = 1; // version 1.0
    header[7] = 0;
    header.writeUInt16LE(dict.length, 8);
    header.write(dict, 10, 'latin1');
    return header;
}

export function writeNpy(path: string, array: NpyArray): void {
    const count = array.shape.reduce((a, b) => a * b, 1);
    if (array.data.length !== count) {
        throw new Error(
            `data length ${array.data.length} does not match shape ` +
            `(${array.shape.join(', ')})`);
    }
    const body = Buffer.from(array.data.buffer, array.data.byteOffset,
        array.data.byteLength);
    writeFileSync(path, Buffer.concat([headerFor(array.descr, array.shape), body]));
}

export function readNpy(path: string): NpyArray {
    const buf = readFileSync(path);
    if (!buf.subarray(0, 6).equals(MAGIC)) {
        throw new Error(`${path}: not an NPY file`);
    }
    if (buf[6] !== 1) {
        throw new Error(`${path}: unsupported NPY version ${buf[6]}.${buf[7]}`);
    }
    const headerLen = buf.readUInt16LE(8);
    const header = buf.subarray(10, 10 + headerLen).toString('latin1');
    const descrMatch = header.match(/'descr':\s*'([^']+)'/);
    const orderMatch = header.match(/'fortran_order':\s*(True|False)/);
    const shapeMatch = header.match(/'shape':\s*\(([^)]*)\)/);
    if (!descrMatch || !orderMatch || !shapeMatch) {
        throw new Error(`${path}: malformed NPY header: ${header}`);
    }
    if (orderMatch[1] === 'True') {
        throw new Error(`${path}: fortran-order arrays are not supported`);
    }
    const descr = descrMatch[1] as NpyDescr;
    const shape = shapeMatch[1]
        .split(',')
        .map((s) => s.trim())
        .filter((s) => s.length > 0)
        .map((s) => parseInt(s, 10));
    const count = shape.reduce((a, b) => a * b, 1);
    const start = 10 + headerLen;
    const slice = buf.buffer.slice(buf.byteOffset + start,
        buf.byteOffset + start + count * itemSize(descr));
    switch (descr) {
        case '<f4':
            return { descr, shape, data: new Float32Array(slice) };
        case '<f8':
            return { descr, shape, data: new Float64Array(slice) };
        case '<i8':
            return { descr, shape, data: new BigInt64Array(slice) };
        default:
            throw new Error(`${path}: unsupported dtype ${descr}`);
    }
}

function itemSize(descr: NpyDescr): number {
    return descr === '<f4' ? 4 : 8;
}
