"""Universal phone inventories, pronunciation lexicons, and phoneme remapping.

Phone ids start at 1; id 0 is reserved for epsilon so language-model backoff
arcs and graph arcs share one label space. A single universal inventory is
used everywhere; per-language phone sets and "attested in training" sets are
subsets of its id space.
"""

from dataclasses import dataclass, field

from .errors import (
    DuplicateSymbolError,
    EmptySymbolError,
    MalformedLineError,
    OutOfVocabularyError,
    UnknownPhoneError,
    UnmappedMissingPhoneError,
)


@dataclass(frozen=True)
class PhoneInventory:
    symbols: tuple                    # index i holds the symbol of phone id i+1
    language_tags: dict = field(default_factory=dict)  # phone-id -> frozenset of codes

    def __len__(self):
        return len(self.symbols)

    def __contains__(self, phone_id: int) -> bool:
        return 1 <= phone_id <= len(self.symbols)

    def id_of(self, symbol: str) -> int:
        try:
            return self._index[symbol]
        except KeyError:
            raise UnknownPhoneError(symbol) from None

    def symbol_of(self, phone_id: int) -> str:
        if not 1 <= phone_id <= len(self.symbols):
            raise UnknownPhoneError(phone_id)
        return self.symbols[phone_id - 1]

    def ids(self):
        return range(1, len(self.symbols) + 1)

    @property
    def _index(self):
        idx = self.__dict__.get("_index_cache")
        if idx is None:
            idx = {s: i + 1 for i, s in enumerate(self.symbols)}
            self.__dict__["_index_cache"] = idx
        return idx


def load_inventory(text: str) -> PhoneInventory:
    """One phone symbol per line, optional TAB-separated language-code list."""
    symbols = []
    seen = set()
    tags = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\n")
        if not line.strip():
            continue
        parts = line.split("\t")
        symbol = parts[0].strip()
        if not symbol:
            raise EmptySymbolError("empty phone symbol", line=lineno)
        if any(c.isspace() for c in symbol):
            raise EmptySymbolError(
                f"phone symbol {symbol!r} contains whitespace", line=lineno
            )
        if symbol in seen:
            raise DuplicateSymbolError(f"duplicate symbol {symbol!r}", line=lineno)
        seen.add(symbol)
        symbols.append(symbol)
        if len(parts) > 1 and parts[1].strip():
            codes = frozenset(c.strip() for c in parts[1].split(",") if c.strip())
            tags[len(symbols)] = codes
    return PhoneInventory(tuple(symbols), tags)


def serialize_inventory(inv: PhoneInventory) -> str:
    lines = []
    for pid in inv.ids():
        sym = inv.symbol_of(pid)
        if pid in inv.language_tags:
            sym += "\t" + ",".join(sorted(inv.language_tags[pid]))
        lines.append(sym)
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class Lexicon:
    entries: dict  # word -> list of pronunciations, each a tuple of phone ids

    def __contains__(self, word: str) -> bool:
        return word in self.entries

    def pronunciations(self, word: str):
        try:
            return self.entries[word]
        except KeyError:
            raise OutOfVocabularyError(word) from None

    def words(self):
        return self.entries.keys()


def load_lexicon(text: str, inv: PhoneInventory) -> Lexicon:
    """Lines of ``word<TAB>phone phone ...``; repeated words accumulate variants."""
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\n")
        if not line.strip():
            continue
        if "\t" not in line:
            raise MalformedLineError("expected word<TAB>phones", line=lineno)
        word, phone_field = line.split("\t", 1)
        word = word.strip()
        phones = phone_field.split()
        if not word or not phones:
            raise MalformedLineError("empty word or pronunciation", line=lineno)
        try:
            pron = tuple(inv.id_of(p) for p in phones)
        except UnknownPhoneError as exc:
            raise UnknownPhoneError(exc.phone, line=lineno) from None
        entries.setdefault(word, []).append(pron)
    return Lexicon(entries)


def transcript_to_phone_alternatives(words, lex: Lexicon):
    """For each word position, the list of its pronunciations.

    The cross-product over positions is never materialized here; the
    numerator graph builder takes it as graph alternation.
    """
    return [list(lex.pronunciations(w)) for w in words]


@dataclass(frozen=True)
class RemapTable:
    mapping: dict  # missing phone-id -> replacement phone-id


def make_remap_table(mapping: dict, training_ids) -> RemapTable:
    """Validate a missing -> replacement map against the training phone set."""
    training = set(training_ids)
    for missing, replacement in mapping.items():
        if missing == replacement:
            raise ValueError(f"identity remap entry for phone {missing}")
        if missing in training:
            raise ValueError(f"remap key {missing} is already in the training inventory")
        if replacement not in training:
            raise ValueError(
                f"replacement {replacement} for {missing} is not in the training inventory"
            )
        if replacement in mapping:
            raise ValueError(
                f"remap chain: replacement {replacement} is itself remapped"
            )
    return RemapTable(dict(mapping))


def load_remap(text: str, inv: PhoneInventory, training_ids) -> RemapTable:
    """Lines of ``missing<TAB>replacement`` phone symbols."""
    mapping = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\n")
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise MalformedLineError("expected missing<TAB>replacement", line=lineno)
        try:
            missing = inv.id_of(parts[0].strip())
            replacement = inv.id_of(parts[1].strip())
        except UnknownPhoneError as exc:
            raise UnknownPhoneError(exc.phone, line=lineno) from None
        mapping[missing] = replacement
    return make_remap_table(mapping, training_ids)


def remap_sequence(seq, table: RemapTable, training_ids):
    """Replace phones missing from the training set by their table entries.

    ``training_ids`` is the collection of phone ids attested in training;
    phones already attested pass through unchanged. Idempotent.
    """
    training = set(training_ids)
    out = []
    for phone in seq:
        if phone in training:
            out.append(phone)
        elif phone in table.mapping:
            out.append(table.mapping[phone])
        else:
            raise UnmappedMissingPhoneError(phone)
    return out
