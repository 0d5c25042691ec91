"""A small trainable acoustic model: MLP encoder plus named affine output heads.

Everything is float64 numpy with hand-written backprop; at desk scale this
keeps the whole training stack deterministic and lets gradient checks run in
double precision. Heads are independently replaceable without touching
encoder parameters, which is what the output-layer transfer scenarios rely
on.
"""

import hashlib
import json

import numpy as np


class AcousticModel:
    def __init__(self, feature_dim, hidden, heads, seed=0):
        """
        Args:
          feature_dim: width of input feature vectors.
          hidden: sequence of hidden-layer widths (tanh after each).
          heads: mapping head name -> output width (pdf count).
          seed: parameter init seed.
        """
        self.feature_dim = int(feature_dim)
        self.hidden = [int(h) for h in hidden]
        rng = np.random.default_rng(seed)
        self.encoder = []
        fan_in = self.feature_dim
        for width in self.hidden:
            self.encoder.append(_affine_init(rng, fan_in, width))
            fan_in = width
        self.rep_dim = fan_in
        self.heads = {}
        for name, out_dim in heads.items():
            self.heads[name] = _affine_init(rng, self.rep_dim, int(out_dim))

    # --- forward / backward -----------------------------------------------

    def encode(self, features):
        """Hidden activations per layer; the last entry is the representation."""
        acts = [np.asarray(features, dtype=np.float64)]
        h = acts[0]
        for W, b in self.encoder:
            h = np.tanh(h @ W + b)
            acts.append(h)
        return acts

    def forward(self, features, head):
        """Emissions (T x P) for one utterance plus the cache backward needs."""
        acts = self.encode(features)
        W, b = self.heads[head]
        emissions = acts[-1] @ W + b
        return emissions, acts

    def backward(self, acts, d_emissions, head, freeze_encoder=False):
        """Parameter gradients given d loss / d emissions.

        Returns a dict keyed like ``parameters()``; encoder entries are
        omitted entirely when the encoder is frozen.
        """
        grads = {}
        rep = acts[-1]
        W, _ = self.heads[head]
        d = np.asarray(d_emissions, dtype=np.float64)
        grads[f"head.{head}.W"] = rep.T @ d
        grads[f"head.{head}.b"] = d.sum(axis=0)
        if freeze_encoder:
            return grads
        d_h = d @ W.T
        for i in range(len(self.encoder) - 1, -1, -1):
            W_i, _ = self.encoder[i]
            # tanh'(z) = 1 - tanh(z)^2, and acts[i+1] holds tanh(z)
            d_z = d_h * (1.0 - acts[i + 1] ** 2)
            grads[f"enc.{i}.W"] = acts[i].T @ d_z
            grads[f"enc.{i}.b"] = d_z.sum(axis=0)
            d_h = d_z @ W_i.T
        return grads

    # --- parameter plumbing --------------------------------------------------

    def parameters(self):
        params = {}
        for i, (W, b) in enumerate(self.encoder):
            params[f"enc.{i}.W"] = W
            params[f"enc.{i}.b"] = b
        for name, (W, b) in self.heads.items():
            params[f"head.{name}.W"] = W
            params[f"head.{name}.b"] = b
        return params

    def apply_update(self, grads, step_size):
        for key, g in grads.items():
            self._param_array(key)[...] -= step_size * g

    def _param_array(self, key):
        kind, rest = key.split(".", 1)
        idx, field = rest.rsplit(".", 1)
        pair = self.encoder[int(idx)] if kind == "enc" else self.heads[idx]
        return pair[0] if field == "W" else pair[1]

    def head_dim(self, name):
        return self.heads[name][0].shape[1]

    def replace_head(self, name, out_dim, seed):
        """(Re)initialize one output head; encoder parameters are untouched."""
        rng = np.random.default_rng(seed)
        self.heads[name] = _affine_init(rng, self.rep_dim, int(out_dim))

    def encoder_checksum(self) -> str:
        digest = hashlib.sha256()
        for W, b in self.encoder:
            digest.update(np.ascontiguousarray(W).tobytes())
            digest.update(np.ascontiguousarray(b).tobytes())
        return digest.hexdigest()

    def copy(self):
        clone = AcousticModel.__new__(AcousticModel)
        clone.feature_dim = self.feature_dim
        clone.hidden = list(self.hidden)
        clone.rep_dim = self.rep_dim
        clone.encoder = [(W.copy(), b.copy()) for W, b in self.encoder]
        clone.heads = {n: (W.copy(), b.copy()) for n, (W, b) in self.heads.items()}
        return clone

    # --- persistence ---------------------------------------------------------

    def save(self, path):
        meta = {
            "feature_dim": self.feature_dim,
            "hidden": self.hidden,
            "heads": {n: self.head_dim(n) for n in self.heads},
        }
        arrays = {"meta": np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)}
        for key, arr in self.parameters().items():
            arrays[key] = arr
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path):
        data = np.load(path)
        meta = json.loads(bytes(data["meta"]).decode())
        model = cls(meta["feature_dim"], meta["hidden"], meta["heads"], seed=0)
        for key in model.parameters():
            model._param_array(key)[...] = data[key]
        return model


def _affine_init(rng, fan_in, out_dim):
    W = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, out_dim))
    b = np.zeros(out_dim)
    return (W, b)


def clip_gradients(grads, max_norm):
    """Scale the whole gradient dict so its global L2 norm is at most max_norm."""
    total = 0.0
    for g in grads.values():
        total += float((g * g).sum())
    norm = total ** 0.5
    if norm > max_norm > 0:
        scale = max_norm / norm
        return {k: g * scale for k, g in grads.items()}, norm
    return grads, norm
