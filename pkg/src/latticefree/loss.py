"""The training objective: numerator/denominator marginals and their gradient.

The per-utterance loss is den_logprob - num_logprob (the negated objective),
and its gradient with respect to the unnormalized emissions is the occupancy
difference gamma_den - gamma_num. Each gradient row therefore sums to zero:
the objective is globally normalized, so shifting a whole emission row by a
constant changes both marginals equally and leaves the loss alone.
"""

from dataclasses import dataclass

import numpy as np

from .errors import NoAcceptingPathError, NumeratorPrunedError
from .fb import graph_forward_backward
from .graph import WeightedGraph
from .semiring import LOG_ZERO


@dataclass
class LossResult:
    loss: float
    num_logprob: float
    den_logprob: float
    grad: np.ndarray            # T x P, d loss / d emissions


@dataclass
class BatchLossResult:
    results: list               # LossResult or None per utterance
    skipped: list               # indices of pruned utterances
    total_loss: float


def lfmmi_loss(num: WeightedGraph, den: WeightedGraph, emissions) -> LossResult:
    """Exact loss and emission gradient for one utterance.

    Raises NumeratorPruned when the numerator accepts no path of the
    utterance's length (for example T below the minimum duration); such
    utterances must be skipped and reported, never silently zeroed.
    """
    e = np.asarray(emissions, dtype=np.float64)
    num_logprob, gamma_num = graph_forward_backward(num, e)
    if num_logprob == LOG_ZERO:
        raise NumeratorPrunedError(
            f"numerator has no accepting path for {e.shape[0]} frames"
        )
    den_logprob, gamma_den = graph_forward_backward(den, e)
    if den_logprob == LOG_ZERO:
        raise NoAcceptingPathError(
            f"denominator has no accepting path for {e.shape[0]} frames"
        )
    return LossResult(
        loss=den_logprob - num_logprob,
        num_logprob=num_logprob,
        den_logprob=den_logprob,
        grad=gamma_den - gamma_num,
    )


def batch_loss(nums, den: WeightedGraph, emission_list) -> BatchLossResult:
    """Per-utterance losses against a shared denominator, summed in index order.

    Pruned utterances are recorded in ``skipped`` (with None in ``results``)
    and excluded from the sum.
    """
    if len(nums) != len(emission_list):
        raise ValueError(
            f"{len(nums)} numerator graphs but {len(emission_list)} emission matrices"
        )
    results = []
    skipped = []
    total = 0.0
    for i, (num, e) in enumerate(zip(nums, emission_list)):
        try:
            res = lfmmi_loss(num, den, e)
        except NumeratorPrunedError:
            results.append(None)
            skipped.append(i)
            continue
        results.append(res)
        total += res.loss
    return BatchLossResult(results, skipped, total)
