"""Synthetic query variations: question-stem rewrites and number/article edits.

The stem table is bidirectional ("how do we X" <-> "how to X"), so applying
the matched rule to its own output reproduces the source.  Number/article
edits are enumerated from rule tables (noun suffix rules, an irregular/
invariant lexicon, article contexts) and a seeded sample of up to two edit
sites produces each variant.  The tables live in data/variation_rules.json
so they can be extended without code changes.

Semantic paraphrases are fetched from an external completion endpoint; see
the paraphrase module.
"""

import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

from .errors import ValidationError
from .metrics import VariationType
from .rng import keyed_generator


@dataclass
class QueryRecord:
    id: str
    query: str
    context: str = None
    answer: str = None


@dataclass
class VariationRecord:
    id: str
    source_id: str
    variation_type: VariationType
    query: str


@lru_cache(maxsize=1)
def load_rules() -> dict:
    raw = resources.files("conmerge").joinpath("data/variation_rules.json").read_text("utf-8")
    rules = json.loads(raw)
    rules["function_words"] = {w.lower() for w in rules["function_words"]}
    rules["common_verbs"] = {w.lower() for w in rules["common_verbs"]}
    rules["invariant_nouns"] = set(rules["invariant_nouns"])
    rules["plural_to_singular"] = {v: k for k, v in rules["irregular_nouns"].items()}
    return rules


# --- question-stem rewrites ------------------------------------------------


def gen_howto_variations(q: QueryRecord) -> list:
    """Every applicable stem rewrite from the bidirectional rule table."""
    rules = load_rules()
    rewrites = []
    for left, right in rules["stem_pairs"]:
        for src, dst in ((left, right), (right, left)):
            if q.query.lower().startswith(src.lower()):
                candidate = dst + q.query[len(src):]
                if candidate != q.query and candidate not in rewrites:
                    rewrites.append(candidate)
    return [
        VariationRecord(id=f"{q.id}-htd{i}", source_id=q.id, variation_type=VariationType.HOW_TO_DO, query=text)
        for i, text in enumerate(rewrites)
    ]


# --- singular/plural/article edits -----------------------------------------


def pluralize_noun(word: str) -> str:
    """Plural form of a singular noun, or None when the tables say leave it alone."""
    rules = load_rules()
    if word in rules["invariant_nouns"]:
        return None
    if word in rules["irregular_nouns"]:
        return rules["irregular_nouns"][word]
    if len(word) >= 2 and word.endswith("y") and word[-2] not in "aeiou":
        return word[:-1] + "ies"
    if word.endswith(("s", "x", "z", "ch", "sh")):
        return word + "es"
    return word + "s"


def singularize_noun(word: str) -> str:
    """Singular form of a plural noun, or None when no rule applies."""
    rules = load_rules()
    if word in rules["invariant_nouns"]:
        return None
    if word in rules["plural_to_singular"]:
        return rules["plural_to_singular"][word]
    if word.endswith("ies") and len(word) > 4:
        return word[:-3] + "y"
    if word.endswith(("ses", "xes", "zes", "ches", "shes")) and len(word) > 4:
        return word[:-2]
    if word.endswith("s") and not word.endswith("ss") and len(word) > 3:
        return word[:-1]
    return None


def _looks_plural(word: str) -> bool:
    rules = load_rules()
    if word in rules["plural_to_singular"]:
        return True
    return word.endswith("s") and not word.endswith("ss") and len(word) > 3


def _is_noun_candidate(word: str) -> bool:
    rules = load_rules()
    if not word.isalpha() or len(word) < 3:
        return False
    if word in rules["function_words"] or word in rules["common_verbs"]:
        return False
    for suffix in rules["skip_suffixes"]:
        if word.endswith(suffix) and len(word) >= len(suffix) + 3:
            return False
    return True


def _indefinite_governed(tokens: list, i: int) -> bool:
    """True when tokens[i] sits inside a noun phrase opened by "a"/"an".

    Pluralizing such a noun would clash with the indefinite article; the
    drop_article_pluralize edit owns those sites.  "the" agrees with either
    number, so it does not block.
    """
    rules = load_rules()
    j = i - 1
    steps = 0
    while j >= 0 and steps < 3:
        word = tokens[j].lower()
        if word in ("a", "an"):
            return True
        if word in rules["function_words"]:
            return False
        j -= 1
        steps += 1
    return False


def enumerate_number_article_edits(query: str) -> list:
    """All candidate edit sites in a query, as (kind, token index) pairs.

    Kinds: "singularize", "pluralize", "insert_the" on noun tokens;
    "drop_article_pluralize" on "a"/"an"; "drop_the" on "the".
    """
    rules = load_rules()
    tokens = query.split()
    edits = []
    for i, tok in enumerate(tokens):
        word = tok.lower()
        if word in ("a", "an"):
            head = _noun_phrase_head(tokens, i)
            if (
                head is not None
                and not _looks_plural(tokens[head].lower())
                and pluralize_noun(tokens[head].lower()) is not None
            ):
                edits.append(("drop_article_pluralize", i))
            continue
        if word == "the":
            nxt = tokens[i + 1].lower() if i + 1 < len(tokens) else ""
            if nxt.isalpha() and nxt not in rules["function_words"]:
                edits.append(("drop_the", i))
            continue
        if not _is_noun_candidate(word):
            continue
        if _looks_plural(word):
            if singularize_noun(word) is not None:
                edits.append(("singularize", i))
            if i == 0 or tokens[i - 1].lower() not in rules["articles"]:
                edits.append(("insert_the", i))
        else:
            if not _indefinite_governed(tokens, i) and pluralize_noun(word) is not None:
                edits.append(("pluralize", i))
    return edits


def _noun_phrase_head(tokens: list, article_idx: int):
    """Index of the last token of the noun phrase opened at article_idx, or None.

    After an article, any run of non-function words is treated as the noun
    phrase (a following word cannot be a finite verb), capped at three words.
    """
    rules = load_rules()
    head = None
    for j in range(article_idx + 1, min(article_idx + 4, len(tokens))):
        word = tokens[j].lower()
        if word in rules["function_words"] or not word.isalpha():
            break
        head = j
    return head


def apply_edits(query: str, edits: list) -> str:
    """Apply edit sites from enumerate_number_article_edits to the query text."""
    tokens = query.split()
    for kind, i in sorted(edits, key=lambda e: -e[1]):
        word = tokens[i].lower()
        if kind == "singularize":
            tokens[i] = singularize_noun(word)
        elif kind == "pluralize":
            tokens[i] = pluralize_noun(word)
        elif kind == "insert_the":
            tokens.insert(i, "the")
        elif kind == "drop_the":
            del tokens[i]
        elif kind == "drop_article_pluralize":
            head = _noun_phrase_head(tokens, i)
            if head is not None:
                plural = pluralize_noun(tokens[head].lower())
                if plural is not None:
                    tokens[head] = plural
            del tokens[i]
        else:
            raise ValidationError(f"unknown edit kind {kind!r}")
    return " ".join(tokens)


def gen_number_article_variations(q: QueryRecord, seed: int, count: int = 1, max_edits: int = 2) -> list:
    """Seeded number/article variants: each applies 1..max_edits sampled edit sites."""
    candidates = enumerate_number_article_edits(q.query)
    if not candidates:
        return []
    gen = keyed_generator(seed, f"spa|{q.id}")
    seen = {q.query}
    records = []
    for _ in range(count):
        k = int(gen.integers(1, min(max_edits, len(candidates)) + 1))
        picks = gen.choice(len(candidates), size=k, replace=False)
        text = apply_edits(q.query, [candidates[p] for p in sorted(picks)])
        if text in seen:
            continue
        seen.add(text)
        records.append(
            VariationRecord(
                id=f"{q.id}-spa{len(records)}",
                source_id=q.id,
                variation_type=VariationType.SING_PLUR_ARTICLE,
                query=text,
            )
        )
    return records


# --- corpus I/O -------------------------------------------------------------


def read_query_corpus(path) -> list:
    """QueryRecords from a JSON Lines file, in file order."""
    records = []
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"line {lineno}: invalid JSON ({exc})") from exc
            for key in ("id", "query"):
                if key not in raw:
                    raise ValidationError(f"line {lineno}: missing field {key}")
            if not raw["query"]:
                raise ValidationError(f"line {lineno}: empty query")
            if raw["id"] in seen:
                raise ValidationError(f"line {lineno}: duplicate id {raw['id']!r}")
            seen.add(raw["id"])
            records.append(
                QueryRecord(
                    id=str(raw["id"]),
                    query=raw["query"],
                    context=raw.get("context"),
                    answer=raw.get("answer"),
                )
            )
    return records


def write_query_corpus(records: list, path):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            row = {"id": rec.id, "query": rec.query}
            if rec.context is not None:
                row["context"] = rec.context
            if rec.answer is not None:
                row["answer"] = rec.answer
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def write_variations(records: list, path, contexts: dict = None):
    """Write variation records; ``contexts`` (source_id -> context) copies the
    source record's retrieved context onto each variant instead of re-running
    retrieval."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            row = {
                "id": rec.id,
                "source_id": rec.source_id,
                "variation_type": rec.variation_type.value,
                "query": rec.query,
            }
            if contexts and contexts.get(rec.source_id) is not None:
                row["context"] = contexts[rec.source_id]
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def read_variations(path) -> list:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"line {lineno}: invalid JSON ({exc})") from exc
            for key in ("id", "source_id", "variation_type", "query"):
                if key not in raw:
                    raise ValidationError(f"line {lineno}: missing field {key}")
            records.append(
                VariationRecord(
                    id=str(raw["id"]),
                    source_id=str(raw["source_id"]),
                    variation_type=VariationType(raw["variation_type"]),
                    query=raw["query"],
                )
            )
    return records
