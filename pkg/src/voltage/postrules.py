"""Linguistic post-processing of recognized words.

Rules R1-R7 are built in; R8 merges part sequences listed in the script's
composition table; R9/R10 need an attached dictionary. The script model is
an INI file:

    [classes]       label = consonant | vowel | modifier | number | delimiter | part
    [panchamkshar]  labels = <space separated>
    [composition]   whole = part1 part2 ...
    [reorder]       first = second     (second may be a class name)
"""
from __future__ import annotations

import configparser
import enum
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

from .raster import Rect

CLASSES = ("consonant", "vowel", "modifier", "number", "delimiter", "part")
ALL_RULES = frozenset(f"R{i}" for i in range(1, 11))
DEFAULT_RULES = frozenset(f"R{i}" for i in range(1, 9))
MAX_PASSES = 5


class ConfigError(ValueError):
    pass


class Action(str, enum.Enum):
    REJECT = "reject"
    REORDER = "reorder"
    MERGE = "merge"
    SUBSTITUTE = "substitute"
    FLAG = "flag"


RULE_ACTION = {
    "R1": Action.REJECT, "R2": Action.REJECT, "R3": Action.REJECT,
    "R4": Action.SUBSTITUTE, "R5": Action.SUBSTITUTE, "R6": Action.SUBSTITUTE,
    "R7": Action.REORDER, "R8": Action.MERGE, "R9": Action.SUBSTITUTE, "R10": Action.FLAG,
}


@dataclass
class ScriptModel:
    classes: dict[str, str]
    panchamkshar: frozenset[str] = frozenset()
    composition: dict[tuple[str, ...], str] = field(default_factory=dict)
    reorder: list[tuple[str, str]] = field(default_factory=list)
    dictionary: frozenset[str] | None = None

    def __post_init__(self):
        for lab, cls in self.classes.items():
            if cls not in CLASSES:
                raise ConfigError(f"label {lab!r} has unknown class {cls!r}")
        for lab in self.panchamkshar:
            self.class_of(lab)
        for parts, whole in self.composition.items():
            for lab in (*parts, whole):
                self.class_of(lab)

    def class_of(self, label: str) -> str:
        try:
            return self.classes[label]
        except KeyError:
            raise ConfigError(f"label {label!r} missing from script model") from None

    @classmethod
    def from_text(cls, text: str) -> "ScriptModel":
        cp = configparser.ConfigParser(delimiters=("=",))
        cp.optionxform = str  # labels are case-sensitive
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"malformed script model: {exc}") from None
        if not cp.has_section("classes"):
            raise ConfigError("script model needs a [classes] section")
        classes = {k: v.strip() for k, v in cp["classes"].items()}
        pk = frozenset(cp.get("panchamkshar", "labels", fallback="").split())
        comp = {}
        if cp.has_section("composition"):
            comp = {tuple(v.split()): k for k, v in cp["composition"].items()}
        reorder = []
        if cp.has_section("reorder"):
            reorder = [(k, v.strip()) for k, v in cp["reorder"].items()]
        return cls(classes, pk, comp, reorder)

    @classmethod
    def load(cls, path) -> "ScriptModel":
        return cls.from_text(Path(path).read_text())


def attach_dictionary(script: ScriptModel, words: Iterable[str]) -> ScriptModel:
    return replace(script, dictionary=frozenset(w.strip() for w in words if w.strip()))


def load_dictionary(path) -> list[str]:
    return Path(path).read_text(encoding="utf-8").split()


@dataclass(frozen=True)
class RecSymbol:
    label: str
    zone: str = "middle"
    score: float = 1.0
    alternatives: tuple[str, ...] = ()  # next-ranked labels, best first
    box: Rect | None = None


@dataclass(frozen=True)
class RecognizedWord:
    symbols: tuple[RecSymbol, ...]
    flags: tuple[tuple[str, int], ...] = ()  # (rule, position) left uncorrected

    @property
    def labels(self) -> list[str]:
        return [s.label for s in self.symbols]

    def text(self, sep: str = "") -> str:
        return sep.join(self.labels)


def word_of(labels: Sequence[str], alternatives=None) -> RecognizedWord:
    alts = alternatives or [()] * len(labels)
    return RecognizedWord(tuple(RecSymbol(lab, alternatives=tuple(a)) for lab, a in zip(labels, alts)))


@dataclass(frozen=True, order=True)
class RuleViolation:
    start: int
    end: int  # inclusive
    rule: str
    action: Action = field(compare=False)


def _v(rule, start, end=None):
    return RuleViolation(start, start if end is None else end, rule, RULE_ACTION[rule])


def _roots(cls):
    return [i for i, c in enumerate(cls) if c not in ("modifier", "delimiter")]


def check_rules(word: RecognizedWord, script: ScriptModel,
                enabled: Iterable[str] = DEFAULT_RULES) -> list[RuleViolation]:
    enabled = frozenset(enabled)
    unknown = enabled - ALL_RULES
    if unknown:
        raise ConfigError(f"unknown rules {sorted(unknown)}")
    if enabled & {"R9", "R10"} and script.dictionary is None:
        raise ConfigError("R9/R10 need a dictionary (attach_dictionary)")
    labels = word.labels
    cls = [script.class_of(lab) for lab in labels]
    n = len(labels)
    out: list[RuleViolation] = []
    if "R1" in enabled:
        for i in range(n):
            if cls[i] != "consonant":
                continue
            j = i + 1
            while j < n and cls[j] == "modifier":
                if j > i + 1:
                    out.append(_v("R1", j))
                j += 1
    if "R2" in enabled:
        out += [_v("R2", i) for i in range(n - 1) if cls[i] == "delimiter"]
    if "R3" in enabled:
        out += [_v("R3", i) for i in range(1, n) if cls[i] == "delimiter" and cls[i - 1] == "delimiter"]
    if "R4" in enabled:
        nums = [i for i in range(n) if cls[i] == "number"]
        letters = [i for i in range(n) if cls[i] in ("consonant", "vowel")]
        if nums and letters:
            out += [_v("R4", i) for i in (nums if len(letters) >= len(nums) else letters)]
    roots = _roots(cls)
    if "R5" in enabled and len(roots) > 2:
        out += [_v("R5", i) for i in roots[1:-1] if cls[i] == "vowel"]
    if "R6" in enabled and roots:
        last = roots[-1]
        if labels[last] in script.panchamkshar:
            out.append(_v("R6", last))
    if "R7" in enabled:
        for i in range(n - 1):
            for a, b in script.reorder:
                if labels[i] == a and (labels[i + 1] == b or cls[i + 1] == b):
                    out.append(_v("R7", i, i + 1))
                    break
    if "R8" in enabled:
        for parts in script.composition:
            k = len(parts)
            for i in range(n - k + 1):
                if tuple(labels[i:i + k]) == parts:
                    out.append(_v("R8", i, i + k - 1))
    if script.dictionary is not None and n:
        text = "".join(labels)
        if text not in script.dictionary:
            if "R9" in enabled:
                out.append(_v("R9", 0, n - 1))
            if "R10" in enabled and any("".join(labels[:k]) in script.dictionary
                                        and "".join(labels[k:]) in script.dictionary for k in range(1, n)):
                out.append(_v("R10", 0, n - 1))
    return sorted(out)


def _key(v: RuleViolation):
    return (v.rule, v.start, v.end)


def _try_fix(word, v, script, enabled, before):
    """A corrected word for one violation, or None when no fix qualifies."""
    syms = list(word.symbols)
    old = {_key(x) for x in before}
    candidates = []
    if v.action == Action.REORDER:
        syms[v.start], syms[v.end] = syms[v.end], syms[v.start]
        candidates.append(syms)
    elif v.action == Action.MERGE:
        parts = tuple(s.label for s in syms[v.start:v.end + 1])
        whole = script.composition[parts]
        score = min(s.score for s in syms[v.start:v.end + 1])
        box = None
        for part in syms[v.start:v.end + 1]:
            if part.box is not None:
                box = part.box if box is None else box.union(part.box)
        merged = RecSymbol(whole, syms[v.start].zone, score, (), box)
        candidates.append(syms[:v.start] + [merged] + syms[v.end + 1:])
    elif v.action in (Action.REJECT, Action.SUBSTITUTE):
        positions = range(v.start, v.end + 1)
        for pos in positions:
            for alt in syms[pos].alternatives:
                if alt == syms[pos].label or alt not in script.classes:
                    continue
                cand = list(syms)
                rest = tuple(a for a in syms[pos].alternatives if a != alt)
                cand[pos] = replace(syms[pos], label=alt, alternatives=rest)
                candidates.append(cand)
    for cand in candidates:
        w = RecognizedWord(tuple(cand))
        after = check_rules(w, script, enabled)
        if v.action in (Action.REORDER, Action.MERGE):
            if v.action == Action.MERGE and script.dictionary is not None and w.text() not in script.dictionary:
                continue
            if len(after) < len(before):
                return w
        elif {_key(x) for x in after} <= old - {_key(v)}:
            return w
    return None


def apply_corrections(word: RecognizedWord, violations: Sequence[RuleViolation] | None,
                      script: ScriptModel, enabled: Iterable[str] = DEFAULT_RULES) -> RecognizedWord:
    """Fix violations by reordering, merging or substituting next-ranked
    alternatives; whatever cannot be fixed without creating a new violation
    is flagged. Each pass sweeps the current violations, re-checking after
    every change; at most ``MAX_PASSES`` passes."""
    enabled = frozenset(enabled)
    current = RecognizedWord(word.symbols)
    viols = list(violations) if violations is not None else check_rules(current, script, enabled)
    for _ in range(MAX_PASSES):
        changed = False
        for v in list(viols):
            if v.action == Action.FLAG or _key(v) not in {_key(x) for x in viols}:
                continue
            fixed = _try_fix(current, v, script, enabled, viols)
            if fixed is not None:
                current, changed = fixed, True
                viols = check_rules(current, script, enabled)
        if not changed:
            break
    flags = tuple((v.rule, v.start) for v in check_rules(current, script, enabled))
    return RecognizedWord(current.symbols, flags)
