/**
 * Emission matrix container: `EMAT` magic, three little-endian uint32
 * (version=1, rows, cols), then rows*cols little-endian float32, row-major.
 */

const MAGIC = 'EMAT'
const VERSION = 1

export function encodeEmat(values: Float32Array, rows: number, cols: number): Buffer {
  if (values.length !== rows * cols) {
    throw new Error(`expected ${rows * cols} values, got ${values.length}`)
  }
  const buf = Buffer.alloc(16 + 4 * values.length)
  buf.write(MAGIC, 0, 'ascii')
  buf.writeUInt32LE(VERSION, 4)
  buf.writeUInt32LE(rows, 8)
  buf.writeUInt32LE(cols, 12)
  for (let i = 0; i < values.length; i++) {
    buf.writeFloatLE(values[i], 16 + 4 * i)
  }
  return buf
}

export function decodeEmat(buf: Buffer): { rows: number; cols: number; values: Float32Array } {
  if (buf.subarray(0, 4).toString('ascii') !== MAGIC) {
    throw new Error('bad emission-matrix magic bytes')
  }
  const version = buf.readUInt32LE(4)
  if (version !== VERSION) {
    throw new Error(`unsupported emission-matrix version ${version}`)
  }
  const rows = buf.readUInt32LE(8)
  const cols = buf.readUInt32LE(12)
  const values = new Float32Array(rows * cols)
  for (let i = 0; i < values.length; i++) {
    values[i] = buf.readFloatLE(16 + 4 * i)
  }
  return { rows, cols, values }
}
