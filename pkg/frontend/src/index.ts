export { LatticeFreeWorker } from './client.js'
export type { GraphHandle, LossResult, WorkerOptions } from './client.js'
export {
  GraphParseError,
  InvalidHandleError,
  LatticeFreeError,
  NumeratorPrunedError,
  ShapeMismatchError,
  WorkerError,
} from './errors.js'
export { decodeEmat, encodeEmat } from './emat.js'
