"""Foreign-function surface for embedding the loss in external ML stacks.

Flat procedural API over opaque integer handles: load a serialized graph
into resident memory, then compute loss and gradient against caller-provided
float32 emission buffers. Emissions are upcast to float64 internally and
gradients are downcast to float32 on return. The module is re-entrant:
handles are immutable after load and safe to share across threads.

Run ``python -m latticefree.ffi`` to serve the same four operations over a
JSON-lines stdio protocol for out-of-process bindings (one request object
per line, responses carry the request id; buffers cross as base64 float32,
little-endian). Requests are answered in arrival order, so concurrent
callers multiplexing one worker observe serial semantics.
"""

import base64
import json
import sys
import threading

import numpy as np

from .errors import (
    InvalidHandleError,
    LatticeFreeError,
    NumeratorPrunedError,
    ParseError,
    ShapeMismatchError,
)
from .graph import DecodeGraph, deserialize
from .loss import lfmmi_loss

_lock = threading.Lock()
_graphs = {}
_next_handle = 1
_last_error = ""


def _record(exc):
    global _last_error
    _last_error = str(exc)
    return exc


def lf_last_error() -> str:
    """Message of the most recent error raised by this module ("" if none)."""
    return _last_error


def lf_load_graph(path_or_text) -> int:
    """Load and validate a serialized graph; returns an opaque handle.

    Accepts either a filesystem path or the graph text itself (anything
    starting with the format header is treated as text).
    """
    global _next_handle
    try:
        text = str(path_or_text)
        if not text.startswith("WFSA"):
            with open(text, "r", encoding="utf-8") as fh:
                text = fh.read()
        g = deserialize(text)
        if isinstance(g, DecodeGraph):
            g = g.graph
    except (LatticeFreeError, OSError) as exc:
        raise _record(exc if isinstance(exc, LatticeFreeError) else ParseError(str(exc)))
    with _lock:
        handle = _next_handle
        _next_handle += 1
        _graphs[handle] = g
    return handle


def lf_release_graph(handle: int) -> None:
    with _lock:
        if handle not in _graphs:
            raise _record(InvalidHandleError(f"handle {handle} is not live"))
        del _graphs[handle]


def _graph(handle):
    with _lock:
        g = _graphs.get(handle)
    if g is None:
        raise _record(InvalidHandleError(f"handle {handle} is not live"))
    return g


def lf_graph_info(handle: int) -> dict:
    g = _graph(handle)
    return {
        "num_states": g.num_states,
        "num_arcs": len(g.arcs),
        "num_pdfs": g.max_label(),    # labels are pdf + 1, so max label = count
    }


def lf_loss_and_grad(num_handle: int, den_handle: int, emissions, t: int, p: int):
    """Loss, both log-marginals, and the gradient for one utterance.

    ``emissions`` is a flat float32 buffer (bytes, Float32-convertible array)
    of length t*p, row-major. Returns (loss, num_logprob, den_logprob, grad)
    with grad a float32 array of shape (t, p).
    """
    num = _graph(num_handle)
    den = _graph(den_handle)
    if isinstance(emissions, (bytes, bytearray, memoryview)):
        buf = np.frombuffer(emissions, dtype="<f4")
    else:
        buf = np.asarray(emissions, dtype=np.float32).ravel()
    if buf.size != t * p:
        raise _record(
            ShapeMismatchError(f"buffer has {buf.size} floats, expected {t}x{p}")
        )
    e = buf.astype(np.float64).reshape(t, p)
    try:
        res = lfmmi_loss(num, den, e)
    except LatticeFreeError as exc:
        raise _record(exc)
    return res.loss, res.num_logprob, res.den_logprob, res.grad.astype(np.float32)


# --- stdio worker ---------------------------------------------------------------


def _error_kind(exc) -> str:
    if isinstance(exc, NumeratorPrunedError):
        return "NumeratorPruned"
    if isinstance(exc, ShapeMismatchError):
        return "ShapeMismatch"
    if isinstance(exc, InvalidHandleError):
        return "InvalidHandle"
    if isinstance(exc, ParseError):
        return "ParseError"
    return type(exc).__name__


def _handle_request(req):
    op = req.get("op")
    if op == "load_graph":
        handle = lf_load_graph(req.get("text") or req.get("path"))
        return {"handle": handle, **lf_graph_info(handle)}
    if op == "release_graph":
        lf_release_graph(int(req["handle"]))
        return {}
    if op == "graph_info":
        return lf_graph_info(int(req["handle"]))
    if op == "loss_and_grad":
        buf = base64.b64decode(req["emissions"])
        loss, num_lp, den_lp, grad = lf_loss_and_grad(
            int(req["num"]), int(req["den"]), buf, int(req["t"]), int(req["p"])
        )
        return {
            "loss": loss,
            "num_logprob": num_lp,
            "den_logprob": den_lp,
            "grad": base64.b64encode(grad.astype("<f4").tobytes()).decode(),
        }
    if op == "last_error":
        return {"message": lf_last_error()}
    raise ValueError(f"unknown op {op!r}")


def serve(stdin=None, stdout=None) -> None:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            req = json.loads(line)
        except json.JSONDecodeError as exc:
            stdout.write(json.dumps({"id": None, "ok": False, "kind": "Protocol",
                                     "error": str(exc)}) + "\n")
            stdout.flush()
            continue
        if req.get("op") == "shutdown":
            stdout.write(json.dumps({"id": req.get("id"), "ok": True}) + "\n")
            stdout.flush()
            return
        try:
            result = _handle_request(req)
            result.update({"id": req.get("id"), "ok": True})
        except Exception as exc:
            result = {
                "id": req.get("id"),
                "ok": False,
                "kind": _error_kind(exc),
                "error": str(exc),
            }
        stdout.write(json.dumps(result) + "\n")
        stdout.flush()


if __name__ == "__main__":
    serve()
