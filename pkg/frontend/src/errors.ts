/** Typed errors mirroring the worker's error kinds; messages cross verbatim. */

export class LatticeFreeError extends Error {
  constructor(message: string) {
    super(message)
    this.name = new.target.name
  }
}

/** Malformed graph text or file; the message names the offending line. */
export class GraphParseError extends LatticeFreeError {}

/** The numerator accepts no path of the given frame count; skip the utterance. */
export class NumeratorPrunedError extends LatticeFreeError {}

/** Emission buffer length does not match the declared T x P shape. */
export class ShapeMismatchError extends LatticeFreeError {}

/** Handle already released or never issued. */
export class InvalidHandleError extends LatticeFreeError {}

/** Worker process died or the protocol broke. */
export class WorkerError extends LatticeFreeError {}

const KIND_MAP: Record<string, new (message: string) => LatticeFreeError> = {
  ParseError: GraphParseError,
  NumeratorPruned: NumeratorPrunedError,
  ShapeMismatch: ShapeMismatchError,
  InvalidHandle: InvalidHandleError,
}

export function errorFromKind(kind: string, message: string): LatticeFreeError {
  const ctor = KIND_MAP[kind] ?? LatticeFreeError
  return new ctor(message)
}
