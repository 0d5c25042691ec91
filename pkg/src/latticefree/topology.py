"""Per-phone HMM topology and pdf-id arithmetic.

Each phone expands to a left-to-right chain of ``states_per_phone`` emitting
states, optionally with self-loops, so the minimum duration of a phone
occurrence is exactly ``states_per_phone`` frames. Transition weights are
log-one; duration is left to the emissions.

pdf ids are dense: ``pdf(phone, j) = (phone - 1) * k + j`` over phones
1..num_phones and chain positions j in 0..k-1.
"""

from dataclasses import dataclass

from .errors import InvalidParameterError


@dataclass(frozen=True)
class HmmTopology:
    states_per_phone: int
    self_loop: bool
    num_phones: int

    @property
    def num_pdfs(self) -> int:
        return self.num_phones * self.states_per_phone

    def pdf(self, phone: int, state_index: int) -> int:
        return (phone - 1) * self.states_per_phone + state_index


def make_topology(states_per_phone: int, self_loop: bool, num_phones: int) -> HmmTopology:
    if states_per_phone < 1:
        raise InvalidParameterError(
            f"states_per_phone must be >= 1, got {states_per_phone}"
        )
    if num_phones < 1:
        raise InvalidParameterError(f"num_phones must be >= 1, got {num_phones}")
    return HmmTopology(states_per_phone, self_loop, num_phones)
