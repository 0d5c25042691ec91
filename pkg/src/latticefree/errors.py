"""Exception types raised across the package.

Everything derives from ``LatticeFreeError`` so callers (and the CLI) can
distinguish data/validation failures from programming errors with a single
except clause. Parse-type errors carry the 1-based line number of the
offending input line.
"""


class LatticeFreeError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(LatticeFreeError):
    def __init__(self, message, line=None, section=None):
        self.line = line
        self.section = section
        prefix = ""
        if section is not None:
            prefix += f"section {section}, "
        if line is not None:
            prefix += f"line {line}: "
        super().__init__(prefix + message)


# --- graphs ---------------------------------------------------------------

class EmptyGraphError(LatticeFreeError):
    """No start-to-final path exists."""


class CyclicWithoutBoundError(LatticeFreeError):
    """Path sum requested on a cyclic graph with no path-length bound."""


class EpsilonCycleError(LatticeFreeError):
    """Graph contains a cycle of epsilon (non-emitting) arcs."""


class NoAcceptingPathError(LatticeFreeError):
    """Search found no path accepted by the graph for the given frames."""


# --- phone inventories / lexicons ------------------------------------------

class DuplicateSymbolError(ParseError):
    pass


class EmptySymbolError(ParseError):
    pass


class UnknownPhoneError(LatticeFreeError):
    def __init__(self, phone, line=None):
        self.phone = phone
        self.line = line
        where = f" at line {line}" if line is not None else ""
        super().__init__(f"unknown phone {phone!r}{where}")


class MalformedLineError(ParseError):
    pass


class OutOfVocabularyError(LatticeFreeError):
    def __init__(self, word):
        self.word = word
        super().__init__(f"word {word!r} not in lexicon")


class UnmappedMissingPhoneError(LatticeFreeError):
    def __init__(self, phone):
        self.phone = phone
        super().__init__(
            f"phone {phone!r} is not in the training inventory and has no remap entry"
        )


# --- language models --------------------------------------------------------

class EmptyTrainingDataError(LatticeFreeError):
    """Order >= 1 model requested but no positive-weight utterances given."""


class InvalidOrderError(LatticeFreeError):
    pass


# --- graph compilation -------------------------------------------------------

class InvalidParameterError(LatticeFreeError):
    pass


class EmptyTranscriptError(LatticeFreeError):
    pass


class LabelOutOfRangeError(LatticeFreeError):
    pass


# --- loss computation --------------------------------------------------------

class NumeratorPrunedError(LatticeFreeError):
    """Numerator graph has no accepting path for the utterance's frame count."""


class ShapeMismatchError(LatticeFreeError):
    pass


# --- simulation / training ----------------------------------------------------

class InvalidSpecError(LatticeFreeError):
    pass


class DivergedLossError(LatticeFreeError):
    pass


class ScenarioMismatchError(LatticeFreeError):
    pass


class LengthMismatchError(LatticeFreeError):
    pass


class InvalidHandleError(LatticeFreeError):
    pass
