import { spawn, type ChildProcessByStdio } from 'node:child_process'
import { createInterface, type Interface } from 'node:readline'
import type { Readable, Writable } from 'node:stream'

import { WorkerError, errorFromKind } from './errors.js'

/** An immutable graph resident in the worker's memory. */
export interface GraphHandle {
  readonly id: number
  readonly numStates: number
  readonly numArcs: number
  /** pdf count referenced by the graph's emitting arcs */
  readonly numPdfs: number
}

export interface LossResult {
  loss: number
  numLogprob: number
  denLogprob: number
  /** d loss / d emissions, float32, length t * p, row-major */
  grad: Float32Array
}

export interface WorkerOptions {
  /** interpreter used to start the worker (default: python3) */
  pythonPath?: string
}

interface Pending {
  resolve: (value: Record<string, unknown>) => void
  reject: (err: Error) => void
}

/**
 * Client for the loss worker (`python -m latticefree.ffi`).
 *
 * One worker process serves all calls in arrival order; concurrent callers
 * multiplex over request ids, so interleaved calls return exactly what the
 * same calls would return serially (the operations are pure functions of
 * the loaded graphs and buffers).
 */
export class LatticeFreeWorker {
  private proc: ChildProcessByStdio<Writable, Readable, null>
  private lines: Interface
  private pending = new Map<number, Pending>()
  private nextId = 1
  private closed = false

  constructor(options: WorkerOptions = {}) {
    this.proc = spawn(options.pythonPath ?? 'python3', ['-m', 'latticefree.ffi'], {
      stdio: ['pipe', 'pipe', 'inherit'],
    })
    this.lines = createInterface({ input: this.proc.stdout })
    this.lines.on('line', (line) => this.dispatch(line))
    this.proc.on('exit', (code) => {
      if (!this.closed) {
        this.failAll(new WorkerError(`worker exited with code ${code}`))
      }
    })
  }

  private dispatch(line: string): void {
    let msg: Record<string, unknown>
    try {
      msg = JSON.parse(line) as Record<string, unknown>
    } catch {
      this.failAll(new WorkerError(`unparseable worker reply: ${line}`))
      return
    }
    const id = msg.id as number
    const entry = this.pending.get(id)
    if (!entry) return
    this.pending.delete(id)
    if (msg.ok) {
      entry.resolve(msg)
    } else {
      entry.reject(errorFromKind(String(msg.kind ?? ''), String(msg.error ?? '')))
    }
  }

  private failAll(err: Error): void {
    for (const entry of this.pending.values()) entry.reject(err)
    this.pending.clear()
  }

  private request(body: Record<string, unknown>): Promise<Record<string, unknown>> {
    if (this.closed) {
      return Promise.reject(new WorkerError('worker already closed'))
    }
    const id = this.nextId++
    return new Promise((resolve, reject) => {
      this.pending.set(id, { resolve, reject })
      this.proc.stdin.write(JSON.stringify({ id, ...body }) + '\n')
    })
  }

  /** Load a serialized graph from a path, or from the text itself. */
  async loadGraph(pathOrText: string): Promise<GraphHandle> {
    const key = pathOrText.startsWith('WFSA') ? 'text' : 'path'
    const r = await this.request({ op: 'load_graph', [key]: pathOrText })
    return {
      id: r.handle as number,
      numStates: r.num_states as number,
      numArcs: r.num_arcs as number,
      numPdfs: r.num_pdfs as number,
    }
  }

  /** Release a handle; double release rejects with InvalidHandleError. */
  async releaseGraph(handle: GraphHandle): Promise<void> {
    await this.request({ op: 'release_graph', handle: handle.id })
  }

  /**
   * Loss, both log-marginals, and the emission gradient for one utterance.
   * `emissions` must hold t * p float32 values in row-major order.
   */
  async lossAndGrad(
    num: GraphHandle,
    den: GraphHandle,
    emissions: Float32Array,
    t: number,
    p: number,
  ): Promise<LossResult> {
    const buf = Buffer.from(emissions.buffer, emissions.byteOffset, emissions.byteLength)
    const r = await this.request({
      op: 'loss_and_grad',
      num: num.id,
      den: den.id,
      t,
      p,
      emissions: buf.toString('base64'),
    })
    const gradBytes = Buffer.from(String(r.grad), 'base64')
    return {
      loss: r.loss as number,
      numLogprob: r.num_logprob as number,
      denLogprob: r.den_logprob as number,
      grad: new Float32Array(gradBytes.buffer, gradBytes.byteOffset, gradBytes.byteLength / 4),
    }
  }

  /** Message of the worker's most recent error ("" when none). */
  async lastError(): Promise<string> {
    const r = await this.request({ op: 'last_error' })
    return String(r.message ?? '')
  }

  /** Shut the worker down and wait for it to exit. */
  async close(): Promise<void> {
    if (this.closed) return
    this.closed = true
    const exited = new Promise<void>((resolve) => {
      this.proc.once('exit', () => resolve())
    })
    try {
      this.proc.stdin.write(JSON.stringify({ id: this.nextId++, op: 'shutdown' }) + '\n')
    } catch {
      this.proc.kill()
    }
    await exited
    this.failAll(new WorkerError('worker closed'))
  }
}
