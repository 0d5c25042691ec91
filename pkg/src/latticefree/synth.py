"""Synthetic multilingual task generation.

Stands in for real multilingual audio at desk scale: every phone in the
universal inventory gets a Gaussian cluster in feature space (shared across
languages, which is what makes the phoneset universal), each language is a
lexicon over a subset of phones, and utterances are word sequences rendered
as per-frame feature vectors with controllable noise and duration jitter.

Everything is a deterministic function of (spec, seed): every random draw
uses a generator keyed by a fixed tuple of stream indices, so regenerating a
task is bit-identical regardless of ordering or partial generation.
"""

import configparser
from dataclasses import dataclass

import numpy as np

from .emissions import read_emat, write_emat
from .errors import InvalidSpecError
from .phones import Lexicon, PhoneInventory, load_inventory, load_lexicon, serialize_inventory

TRAIN_SPLITS = ("train", "dev", "eval")


@dataclass
class LanguageSpec:
    code: str
    phones: tuple            # phone symbols, subset of the universal inventory
    num_words: int = 24
    word_len_min: int = 2
    word_len_max: int = 4
    role: str = "train"      # "train" or "target"


@dataclass
class SyntheticTaskSpec:
    inventory: PhoneInventory
    languages: list
    feature_dim: int = 16
    phone_spread: float = 1.5
    noise: float = 0.8
    accent: float = 0.0        # per-language shift of the shared phone means
    warp_strength: float = 0.0  # fixed nonlinear distortion of the feature space
    warp_hidden: int = 0        # warp width; 0 means 2 * feature_dim
    word_zipf: float = 0.0     # zipf exponent for word frequencies; 0 = uniform
    frames_min: int = 2
    frames_continue: float = 0.3
    frames_cap: int = 6
    words_min: int = 2
    words_max: int = 4
    train_pool: int = 600
    dev_size: int = 30
    eval_size: int = 50
    unpaired_size: int = 300
    pron_variants: float = 0.0
    seed: int = 0


@dataclass
class Utterance:
    utt_id: str
    words: list
    phones: list             # universal phone ids (reference)
    features: np.ndarray     # T x feature_dim


@dataclass
class LanguageData:
    code: str
    role: str
    phones: list             # universal phone ids
    lexicon: Lexicon
    splits: dict             # split name -> list of Utterance
    unpaired: list           # phone-id sequences


@dataclass
class TaskData:
    inventory: PhoneInventory
    languages: dict          # code -> LanguageData
    spec: SyntheticTaskSpec | None = None
    phone_means: np.ndarray | None = None

    def train_languages(self):
        return [l for l in self.languages.values() if l.role == "train"]

    def target_languages(self):
        return [l for l in self.languages.values() if l.role == "target"]


def validate_spec(spec: SyntheticTaskSpec) -> None:
    if spec.feature_dim < 1:
        raise InvalidSpecError("feature_dim must be >= 1")
    if len(spec.inventory) < 2:
        raise InvalidSpecError("universal inventory needs at least 2 phones")
    if not spec.languages:
        raise InvalidSpecError("no languages defined")
    if spec.frames_min < 1:
        raise InvalidSpecError("frames_min must be >= 1")
    if not 0.0 <= spec.frames_continue < 1.0:
        raise InvalidSpecError("frames_continue must be in [0, 1)")
    if spec.words_min < 1 or spec.words_max < spec.words_min:
        raise InvalidSpecError("bad words_min/words_max")
    universal = set(spec.inventory.symbols)
    train_phones = set()
    for lang in spec.languages:
        if not lang.phones:
            raise InvalidSpecError(f"language {lang.code} has no phones")
        extra = set(lang.phones) - universal
        if extra:
            raise InvalidSpecError(
                f"language {lang.code} uses phones outside the universal inventory: {sorted(extra)}"
            )
        if lang.num_words < 1 or lang.word_len_min < 1 or lang.word_len_max < lang.word_len_min:
            raise InvalidSpecError(f"bad lexicon sizing for language {lang.code}")
        if lang.role not in ("train", "target"):
            raise InvalidSpecError(f"language {lang.code} has unknown role {lang.role!r}")
        if lang.role == "train":
            train_phones |= set(lang.phones)
    targets = [l for l in spec.languages if l.role == "target"]
    if targets and not train_phones:
        raise InvalidSpecError("target languages defined but no training languages")
    for lang in targets:
        shared = len(set(lang.phones) & train_phones) / len(set(lang.phones))
        if shared >= 0.5:
            break
    else:
        if targets:
            raise InvalidSpecError(
                "no target language shares at least half its phones with training"
            )


def _rng(spec_seed, *stream):
    return np.random.default_rng((int(spec_seed),) + tuple(int(s) for s in stream))


def _make_lexicon(spec, lang, lang_index):
    rng = _rng(spec.seed, 1, lang_index)
    phone_ids = np.array([spec.inventory.id_of(p) for p in lang.phones])
    entries = {}
    for w in range(lang.num_words):
        length = int(rng.integers(lang.word_len_min, lang.word_len_max + 1))
        pron = tuple(int(p) for p in rng.choice(phone_ids, size=length))
        prons = [pron]
        if spec.pron_variants > 0 and rng.random() < spec.pron_variants and length >= 1:
            variant = list(pron)
            variant[int(rng.integers(length))] = int(rng.choice(phone_ids))
            if tuple(variant) != pron:
                prons.append(tuple(variant))
        entries[f"w{w:03d}"] = prons
    return Lexicon(entries)


def _word_weights(spec, lang_index, num_words):
    """Per-language word frequencies; zipfian over a shuffled rank order so
    the skew lands on different words in different languages."""
    if not spec.word_zipf:
        return None
    rng = _rng(spec.seed, 6, lang_index)
    ranks = rng.permutation(num_words)
    weights = 1.0 / (ranks + 1.0) ** spec.word_zipf
    return weights / weights.sum()


def _sample_sentence(rng, spec, lexicon, weights=None):
    words_list = sorted(lexicon.words())
    count = int(rng.integers(spec.words_min, spec.words_max + 1))
    if weights is None:
        picks = rng.integers(0, len(words_list), size=count)
    else:
        picks = rng.choice(len(words_list), size=count, p=weights)
    words = [words_list[int(i)] for i in picks]
    phones = []
    for w in words:
        prons = lexicon.entries[w]
        pron = prons[int(rng.integers(len(prons)))] if len(prons) > 1 else prons[0]
        phones.extend(pron)
    return words, phones


def _make_warp(spec):
    """A fixed random residual distortion shared by every language.

    Stands in for the nonlinear acoustics a pretrained feature encoder has to
    untangle; without it the task is linearly separable and pretraining buys
    nothing.
    """
    if not spec.warp_strength:
        return None
    h = spec.warp_hidden or 2 * spec.feature_dim
    rng = _rng(spec.seed, 5)
    w1 = rng.normal(0.0, 1.0 / np.sqrt(spec.feature_dim), size=(spec.feature_dim, h))
    w2 = rng.normal(0.0, 1.0 / np.sqrt(h), size=(h, spec.feature_dim))

    def warp(x):
        return x + spec.warp_strength * np.tanh(x @ w1) @ w2

    return warp


def _render(rng, spec, phone_means, phones, warp):
    rows = []
    for p in phones:
        dur = spec.frames_min
        while dur < spec.frames_cap and rng.random() < spec.frames_continue:
            dur += 1
        mean = phone_means[p - 1]
        for _ in range(dur):
            rows.append(mean + spec.noise * rng.standard_normal(spec.feature_dim))
    clean = np.array(rows)
    return warp(clean) if warp is not None else clean


def generate_task(spec: SyntheticTaskSpec) -> TaskData:
    validate_spec(spec)
    means_rng = _rng(spec.seed, 0)
    phone_means = means_rng.normal(
        0.0, spec.phone_spread, size=(len(spec.inventory), spec.feature_dim)
    )
    warp = _make_warp(spec)
    split_sizes = {
        "train": spec.train_pool,
        "dev": spec.dev_size,
        "eval": spec.eval_size,
    }
    languages = {}
    for lang_index, lang in enumerate(spec.languages):
        lexicon = _make_lexicon(spec, lang, lang_index)
        weights = _word_weights(spec, lang_index, lang.num_words)
        # each language renders the shared means through its own accent shift;
        # the universal tie between languages stays, but transfer to a new
        # language needs some acoustic adaptation
        lang_means = phone_means
        if spec.accent:
            accent_rng = _rng(spec.seed, 4, lang_index)
            lang_means = phone_means + spec.accent * accent_rng.standard_normal(
                phone_means.shape
            )
        splits = {}
        for split_index, split in enumerate(TRAIN_SPLITS):
            utts = []
            for u in range(split_sizes[split]):
                rng = _rng(spec.seed, 2, lang_index, split_index, u)
                words, phones = _sample_sentence(rng, spec, lexicon, weights)
                features = _render(rng, spec, lang_means, phones, warp)
                utts.append(
                    Utterance(f"{lang.code}-{split}-{u:04d}", words, phones, features)
                )
            splits[split] = utts
        unpaired = []
        for u in range(spec.unpaired_size):
            rng = _rng(spec.seed, 3, lang_index, u)
            _, phones = _sample_sentence(rng, spec, lexicon, weights)
            unpaired.append(phones)
        languages[lang.code] = LanguageData(
            code=lang.code,
            role=lang.role,
            phones=[spec.inventory.id_of(p) for p in lang.phones],
            lexicon=lexicon,
            splits=splits,
            unpaired=unpaired,
        )
    return TaskData(spec.inventory, languages, spec=spec, phone_means=phone_means)


# --- task config files -----------------------------------------------------------

_TASK_KEYS = {
    "seed": int,
    "feature_dim": int,
    "phone_spread": float,
    "noise": float,
    "accent": float,
    "warp_strength": float,
    "warp_hidden": int,
    "word_zipf": float,
    "frames_min": int,
    "frames_continue": float,
    "frames_cap": int,
    "words_min": int,
    "words_max": int,
    "train_pool": int,
    "dev_size": int,
    "eval_size": int,
    "unpaired_size": int,
    "pron_variants": float,
}

_LANG_KEYS = {
    "role": str,
    "phones": str,
    "words": int,
    "word_len_min": int,
    "word_len_max": int,
}


def _read_config(text):
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    parser.read_string(text)
    return parser


def parse_task_config(text: str) -> SyntheticTaskSpec:
    """Flat key = value config with [task], [inventory], and [language X] sections."""
    parser = _read_config(text)
    if "inventory" not in parser or "phones" not in parser["inventory"]:
        raise InvalidSpecError("config needs an [inventory] section with a phones key")
    inventory = load_inventory("\n".join(parser["inventory"]["phones"].split()) + "\n")
    kwargs = {}
    if "task" in parser:
        for key, raw in parser["task"].items():
            if key not in _TASK_KEYS:
                raise InvalidSpecError(f"unknown [task] key {key!r}")
            kwargs[key] = _TASK_KEYS[key](raw)
    languages = []
    for section in parser.sections():
        if not section.startswith("language "):
            if section in ("task", "inventory"):
                continue
            raise InvalidSpecError(f"unknown config section [{section}]")
        code = section[len("language "):].strip()
        body = parser[section]
        for key in body:
            if key not in _LANG_KEYS:
                raise InvalidSpecError(f"unknown key {key!r} in [{section}]")
        if "phones" not in body:
            raise InvalidSpecError(f"[{section}] needs a phones key")
        languages.append(
            LanguageSpec(
                code=code,
                phones=tuple(body["phones"].split()),
                num_words=int(body.get("words", 24)),
                word_len_min=int(body.get("word_len_min", 2)),
                word_len_max=int(body.get("word_len_max", 4)),
                role=body.get("role", "train"),
            )
        )
    spec = SyntheticTaskSpec(inventory=inventory, languages=languages, **kwargs)
    validate_spec(spec)
    return spec


# --- persistence -----------------------------------------------------------------


def write_task(task: TaskData, outdir) -> None:
    from pathlib import Path

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "inventory.txt").write_text(serialize_inventory(task.inventory))
    lang_lines = []
    for code in sorted(task.languages):
        lang = task.languages[code]
        symbols = " ".join(task.inventory.symbol_of(p) for p in lang.phones)
        lang_lines.append(f"{code}\t{lang.role}\t{symbols}")
    (outdir / "languages.tsv").write_text("\n".join(lang_lines) + "\n")
    for code in sorted(task.languages):
        lang = task.languages[code]
        ldir = outdir / code
        ldir.mkdir(exist_ok=True)
        lex_lines = []
        for word in sorted(lang.lexicon.words()):
            for pron in lang.lexicon.entries[word]:
                syms = " ".join(task.inventory.symbol_of(p) for p in pron)
                lex_lines.append(f"{word}\t{syms}")
        (ldir / "lexicon.txt").write_text("\n".join(lex_lines) + "\n")
        unpaired_lines = [
            " ".join(task.inventory.symbol_of(p) for p in seq) for seq in lang.unpaired
        ]
        (ldir / "unpaired.txt").write_text("\n".join(unpaired_lines) + "\n")
        for split, utts in lang.splits.items():
            sdir = ldir / split
            (sdir / "feats").mkdir(parents=True, exist_ok=True)
            text_lines, phone_lines = [], []
            for utt in utts:
                text_lines.append(f"{utt.utt_id}\t{' '.join(utt.words)}")
                syms = " ".join(task.inventory.symbol_of(p) for p in utt.phones)
                phone_lines.append(f"{utt.utt_id}\t{syms}")
                write_emat(sdir / "feats" / f"{utt.utt_id}.emat", utt.features)
            (sdir / "text.tsv").write_text("\n".join(text_lines) + "\n")
            (sdir / "phones.tsv").write_text("\n".join(phone_lines) + "\n")


def load_task(taskdir) -> TaskData:
    from pathlib import Path

    taskdir = Path(taskdir)
    inventory = load_inventory((taskdir / "inventory.txt").read_text())
    languages = {}
    for line in (taskdir / "languages.tsv").read_text().splitlines():
        if not line.strip():
            continue
        code, role, symbols = line.split("\t")
        ldir = taskdir / code
        lexicon = load_lexicon((ldir / "lexicon.txt").read_text(), inventory)
        splits = {}
        for split in TRAIN_SPLITS:
            sdir = ldir / split
            if not sdir.exists():
                continue
            words_of = {}
            for row in (sdir / "text.tsv").read_text().splitlines():
                if row.strip():
                    utt_id, text = row.split("\t")
                    words_of[utt_id] = text.split()
            utts = []
            for row in (sdir / "phones.tsv").read_text().splitlines():
                if not row.strip():
                    continue
                utt_id, syms = row.split("\t")
                phones = [inventory.id_of(s) for s in syms.split()]
                features = read_emat(sdir / "feats" / f"{utt_id}.emat")
                utts.append(Utterance(utt_id, words_of[utt_id], phones, features))
            splits[split] = utts
        unpaired = []
        for row in (ldir / "unpaired.txt").read_text().splitlines():
            if row.strip():
                unpaired.append([inventory.id_of(s) for s in row.split()])
        languages[code] = LanguageData(
            code=code,
            role=role,
            phones=[inventory.id_of(s) for s in symbols.split()],
            lexicon=lexicon,
            splits=splits,
            unpaired=unpaired,
        )
    return TaskData(inventory, languages)
