import { execFile } from 'node:child_process'
import { mkdtempSync, rmSync, writeFileSync } from 'node:fs'
import { tmpdir } from 'node:os'
import { join } from 'node:path'
import { promisify } from 'node:util'

import { afterAll, beforeAll, describe, expect, it } from 'vitest'

import {
  GraphParseError,
  InvalidHandleError,
  LatticeFreeWorker,
  NumeratorPrunedError,
  ShapeMismatchError,
  decodeEmat,
  encodeEmat,
  type GraphHandle,
} from '../src/index.js'

const run = promisify(execFile)
const PY = process.env.LATTICEFREE_PYTHON ?? 'python3'

const cli = (args: string[], cwd: string) => run(PY, ['-m', 'latticefree.cli', ...args], { cwd })

let dir: string
let worker: LatticeFreeWorker
let numHandle: GraphHandle
let denHandle: GraphHandle
let reportedPdfs: number

const T = 5
const P = 3

// deterministic pseudo-random emissions
function emissions(scale = 1, offset = 0): Float32Array {
  const e = new Float32Array(T * P)
  for (let i = 0; i < e.length; i++) {
    e[i] = scale * Math.sin(1.7 * i + 0.3) + offset
  }
  return e
}

beforeAll(async () => {
  dir = mkdtempSync(join(tmpdir(), 'latticefree-client-'))
  writeFileSync(join(dir, 'phones.txt'), 'a\nb\nc\n')
  writeFileSync(join(dir, 'corpus.txt'), 'a a b\nb a\na c\n')
  writeFileSync(join(dir, 'mix.tsv'), 'corpus.txt\t1.0\n')
  writeFileSync(join(dir, 'lexicon.txt'), 'cat\ta b\ndog\tc a\n')
  writeFileSync(join(dir, 'utt.txt'), 'cat\n')
  await cli(['estimate-lm', '--order', '2', '--manifest', 'mix.tsv',
    '--vocab', 'phones.txt', '--out', 'lm.arpa'], dir)
  const den = await cli(['build-den', '--lm', 'lm.arpa', '--vocab', 'phones.txt',
    '--states-per-phone', '1', '--out', 'den.wfsa'], dir)
  const m = den.stdout.match(/(\d+) pdfs/)
  reportedPdfs = Number(m?.[1])
  await cli(['build-num', '--transcript', 'utt.txt', '--lexicon', 'lexicon.txt',
    '--vocab', 'phones.txt', '--out', 'num.wfsa'], dir)
  writeFileSync(join(dir, 'u.emat'), encodeEmat(emissions(), T, P))

  worker = new LatticeFreeWorker({ pythonPath: PY })
  numHandle = await worker.loadGraph(join(dir, 'num.wfsa'))
  denHandle = await worker.loadGraph(join(dir, 'den.wfsa'))
}, 60_000)

afterAll(async () => {
  await worker?.close()
  rmSync(dir, { recursive: true, force: true })
})

describe('graph handles', () => {
  it('reports the pdf count the CLI reported at build time', () => {
    expect(denHandle.numPdfs).toBe(reportedPdfs)
    expect(denHandle.numStates).toBeGreaterThan(0)
    expect(denHandle.numArcs).toBeGreaterThan(0)
  })

  it('rejects malformed graph text with the native line number', async () => {
    const bad = 'WFSA v1 2 pdf-id\nA 0 9 1 0.0\nS 0 0.0\nF 1 0.0\n'
    await expect(worker.loadGraph(bad)).rejects.toThrowError(GraphParseError)
    await expect(worker.loadGraph(bad)).rejects.toThrowError(/line 2/)
    expect(await worker.lastError()).toMatch(/line 2/)
  })

  it('release then use raises InvalidHandleError', async () => {
    const h = await worker.loadGraph(join(dir, 'num.wfsa'))
    await worker.releaseGraph(h)
    await expect(worker.releaseGraph(h)).rejects.toThrowError(InvalidHandleError)
    await expect(worker.lossAndGrad(h, denHandle, emissions(), T, P))
      .rejects.toThrowError(InvalidHandleError)
  })
})

describe('loss and gradient', () => {
  it('matches the CLI loss output within 1e-6', async () => {
    const res = await worker.lossAndGrad(numHandle, denHandle, emissions(), T, P)
    const out = await cli(['loss', '--num', 'num.wfsa', '--den', 'den.wfsa',
      '--emat', 'u.emat'], dir)
    const [loss, numLp, denLp] = out.stdout.trim().split(/\s+/).map(Number)
    expect(Math.abs(res.loss - loss)).toBeLessThan(1e-6)
    expect(Math.abs(res.numLogprob - numLp)).toBeLessThan(1e-6)
    expect(Math.abs(res.denLogprob - denLp)).toBeLessThan(1e-6)
    expect(res.grad.length).toBe(T * P)
  })

  it('gradient rows sum to zero', async () => {
    const { grad } = await worker.lossAndGrad(numHandle, denHandle, emissions(), T, P)
    for (let t = 0; t < T; t++) {
      let rowSum = 0
      for (let p = 0; p < P; p++) rowSum += grad[t * P + p]
      expect(Math.abs(rowSum)).toBeLessThan(1e-5)
    }
  })

  it('gradient passes a central finite-difference check at 1e-2', async () => {
    const base = emissions()
    const { grad } = await worker.lossAndGrad(numHandle, denHandle, base, T, P)
    const h = 1e-3
    let worst = 0
    for (let i = 0; i < base.length; i++) {
      const up = Float32Array.from(base)
      const down = Float32Array.from(base)
      up[i] += h
      down[i] -= h
      const lu = (await worker.lossAndGrad(numHandle, denHandle, up, T, P)).loss
      const ld = (await worker.lossAndGrad(numHandle, denHandle, down, T, P)).loss
      const fd = (lu - ld) / (2 * h)
      const rel = Math.abs(fd - grad[i]) / Math.max(Math.abs(fd), Math.abs(grad[i]), 1e-4)
      worst = Math.max(worst, rel)
    }
    expect(worst).toBeLessThanOrEqual(1e-2)
  }, 30_000)

  it('rejects a wrong-length buffer', async () => {
    await expect(worker.lossAndGrad(numHandle, denHandle, new Float32Array(4), T, P))
      .rejects.toThrowError(ShapeMismatchError)
  })

  it('surfaces numerator pruning as its own error type', async () => {
    // the numerator needs at least 2 frames (two phones, k=1)
    await expect(worker.lossAndGrad(numHandle, denHandle, new Float32Array(P), 1, P))
      .rejects.toThrowError(NumeratorPrunedError)
  })

  it('concurrent calls equal serial results', async () => {
    const inputs = Array.from({ length: 16 }, (_, i) => emissions(1 + 0.1 * i, 0.05 * i))
    const serial = []
    for (const e of inputs) {
      serial.push(await worker.lossAndGrad(numHandle, denHandle, e, T, P))
    }
    const concurrent = await Promise.all(
      inputs.map((e) => worker.lossAndGrad(numHandle, denHandle, e, T, P)),
    )
    for (let i = 0; i < inputs.length; i++) {
      expect(concurrent[i].loss).toBe(serial[i].loss)
      expect(concurrent[i].numLogprob).toBe(serial[i].numLogprob)
      expect(concurrent[i].denLogprob).toBe(serial[i].denLogprob)
      expect(Array.from(concurrent[i].grad)).toEqual(Array.from(serial[i].grad))
    }
  }, 30_000)
})

describe('emat container', () => {
  it('round-trips', () => {
    const values = emissions()
    const back = decodeEmat(encodeEmat(values, T, P))
    expect(back.rows).toBe(T)
    expect(back.cols).toBe(P)
    expect(Array.from(back.values)).toEqual(Array.from(values))
  })
})
