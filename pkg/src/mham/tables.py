"""Fixed-schema tables: parsing, attribute bit encodings and vocabularies."""
from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

KINDS = ("number", "mode", "direction", "time-interval", "categorical")

NUMBER_WIDTH = 10
NUMBER_MIN = -50

# 14-slot ordinal scale; "Lkly", "SChc" and "Chc" sit at slots 2, 3, 4.
MODE_SCALE = ("Def", "Ocnl", "Lkly", "SChc", "Chc", "Wide", "Num", "Sct", "Iso",
              "Areas", "Patchy", "Frqnt", "Brf", "--")
MODE_WIDTH = 14

DIRECTION_WIDTH = 14
# principal points, clockwise from SW; NW/N/NE land on slots 5/6/7
PRINCIPAL_BITS = {"SW": 3, "W": 4, "NW": 5, "N": 6, "NE": 7, "E": 8, "SE": 9, "S": 10}
# intermediate points light both flanking principal bits
_INTERMEDIATE = {
    "NNE": ("N", "NE"), "ENE": ("NE", "E"), "ESE": ("E", "SE"), "SSE": ("SE", "S"),
    "SSW": ("S", "SW"), "WSW": ("SW", "W"), "WNW": ("W", "NW"), "NNW": ("NW", "N"),
}
COMPASS = ("N", "NNE", "NE", "ENE", "E", "ESE", "SE", "SSE",
           "S", "SSW", "SW", "WSW", "W", "WNW", "NW", "NNW")

# hour boundaries of the six atomic forecast intervals (30 = 6am next day)
TIME_BOUNDARIES = (6, 9, 13, 17, 21, 26, 30)
TIME_WIDTH = len(TIME_BOUNDARIES) - 1


class ParseError(ValueError):
    pass


class EncodingError(ValueError):
    pass


# --------------------------------------------------------------------------
# per-kind encoders


def encode_number(n: int, width: int = NUMBER_WIDTH, minimum: int = NUMBER_MIN) -> np.ndarray:
    """Big-endian offset binary of ``n - minimum``."""
    if isinstance(n, bool) or int(n) != n:
        raise EncodingError(f"number {n!r} is not an integer")
    shifted = int(n) - minimum
    if not 0 <= shifted < 2 ** width:
        raise EncodingError(f"{n} outside [{minimum}, {minimum + 2 ** width - 1}]")
    bits = [(shifted >> (width - 1 - i)) & 1 for i in range(width)]
    return np.array(bits, dtype=np.float64)


def decode_number(bits: Sequence[float], minimum: int = NUMBER_MIN) -> int:
    value = 0
    for b in bits:
        value = (value << 1) | int(round(float(b)))
    return value + minimum


def encode_mode(label: str) -> np.ndarray:
    try:
        pos = MODE_SCALE.index(label)
    except ValueError:
        raise EncodingError(f"unknown mode label {label!r}") from None
    out = np.zeros(MODE_WIDTH)
    out[pos] = 1.0
    return out


def encode_direction(label: str) -> np.ndarray:
    out = np.zeros(DIRECTION_WIDTH)
    if label in PRINCIPAL_BITS:
        out[PRINCIPAL_BITS[label]] = 1.0
    elif label in _INTERMEDIATE:
        for p in _INTERMEDIATE[label]:
            out[PRINCIPAL_BITS[p]] = 1.0
    else:
        raise EncodingError(f"unknown compass point {label!r}")
    return out


def encode_time_interval(label: str) -> np.ndarray:
    m = re.fullmatch(r"\s*(\d+)\s*-\s*(\d+)\s*", str(label))
    if not m:
        raise EncodingError(f"malformed time interval {label!r}")
    start, end = int(m.group(1)), int(m.group(2))
    if start not in TIME_BOUNDARIES or end not in TIME_BOUNDARIES or start >= end:
        raise EncodingError(f"time interval {label!r} is not a union of atomic intervals")
    out = np.zeros(TIME_WIDTH)
    out[TIME_BOUNDARIES.index(start):TIME_BOUNDARIES.index(end)] = 1.0
    return out


def bits_to_str(bits: Sequence[float]) -> str:
    return "".join(str(int(b)) for b in bits)


# --------------------------------------------------------------------------
# schema and table types


@dataclass(frozen=True)
class Attribute:
    name: str
    kind: str
    width: int = NUMBER_WIDTH          # number only
    minimum: int = NUMBER_MIN          # number only
    categories: tuple[str, ...] = ()   # categorical only

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"attribute {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "categorical" and not self.categories:
            raise ValueError(f"categorical attribute {self.name!r} needs categories")

    @property
    def encoded_width(self) -> int:
        return {
            "number": self.width,
            "mode": MODE_WIDTH,
            "direction": DIRECTION_WIDTH,
            "time-interval": TIME_WIDTH,
            "categorical": len(self.categories),
        }[self.kind]

    def encode(self, value) -> np.ndarray:
        if value is None:
            return np.zeros(self.encoded_width)
        if self.kind == "number":
            return encode_number(value, self.width, self.minimum)
        if self.kind == "mode":
            return encode_mode(value)
        if self.kind == "direction":
            return encode_direction(value)
        if self.kind == "time-interval":
            return encode_time_interval(value)
        if value not in self.categories:
            raise EncodingError(f"{self.name}: unknown category {value!r}")
        out = np.zeros(len(self.categories))
        out[self.categories.index(value)] = 1.0
        return out

    def to_json(self) -> dict:
        d = {"name": self.name, "kind": self.kind}
        if self.kind == "number":
            d.update(width=self.width, min=self.minimum)
        if self.kind == "categorical":
            d["categories"] = list(self.categories)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "Attribute":
        return cls(name=d["name"], kind=d["kind"], width=int(d.get("width", NUMBER_WIDTH)),
                   minimum=int(d.get("min", NUMBER_MIN)),
                   categories=tuple(d.get("categories", ())))


@dataclass(frozen=True)
class Schema:
    record_types: tuple[str, ...]
    attributes: tuple[Attribute, ...]

    def __post_init__(self):
        if len(set(self.record_types)) != len(self.record_types):
            raise ValueError("duplicate record type names")
        names = [a.name for a in self.attributes]
        if len(set(names)) != len(names):
            raise ValueError("duplicate attribute names")
        if not self.attributes:
            raise ValueError("schema has no attributes")

    @property
    def n_attributes(self) -> int:
        return len(self.attributes)

    @property
    def n_record_types(self) -> int:
        return len(self.record_types)

    @property
    def attr_widths(self) -> tuple[int, ...]:
        return tuple(a.encoded_width for a in self.attributes)

    def to_json(self) -> dict:
        return {"record_types": list(self.record_types),
                "attributes": [a.to_json() for a in self.attributes]}

    @classmethod
    def from_json(cls, d: dict) -> "Schema":
        return cls(tuple(d["record_types"]), tuple(Attribute.from_json(a) for a in d["attributes"]))


@dataclass
class Record:
    type: str
    values: list

    def to_json(self, schema: Schema) -> dict:
        return {"type": self.type,
                "attrs": {a.name: v for a, v in zip(schema.attributes, self.values)}}


@dataclass
class Table:
    records: list[Record]

    def __post_init__(self):
        if not self.records:
            raise ValueError("a table needs at least one record")

    def __len__(self) -> int:
        return len(self.records)


@dataclass
class Instance:
    table: Table
    summary: list[str]

    @property
    def text(self) -> str:
        return detokenize(self.summary)


@dataclass
class EncodedTable:
    """``attrs[j]`` is a ``(T, width_j)`` array; ``types`` is ``(T, n_types)``."""
    attrs: list[np.ndarray]
    types: np.ndarray

    @property
    def n_records(self) -> int:
        return self.types.shape[0]


def tokenize(text: str) -> list[str]:
    # single-space split; no case folding
    return [t for t in text.split(" ") if t != ""]


def detokenize(tokens: Iterable[str]) -> str:
    return " ".join(tokens)


def _check_value(attr: Attribute, value, where: str):
    if value is None:
        return None
    try:
        attr.encode(value)
    except EncodingError as exc:
        raise ParseError(f"{where}: attribute {attr.name!r}: {exc}") from None
    return value


def parse_record(obj: dict, schema: Schema, where: str = "record") -> Record:
    if not isinstance(obj, dict) or "type" not in obj:
        raise ParseError(f"{where}: expected an object with a 'type' field")
    rtype = obj["type"]
    if rtype not in schema.record_types:
        raise ParseError(f"{where}: unknown record type {rtype!r}")
    attrs = obj.get("attrs", {}) or {}
    if isinstance(attrs, list):
        if len(attrs) != schema.n_attributes:
            raise ParseError(f"{where}: expected {schema.n_attributes} attribute values, got {len(attrs)}")
        raw = dict(zip((a.name for a in schema.attributes), attrs))
    else:
        unknown = set(attrs) - {a.name for a in schema.attributes}
        if unknown:
            raise ParseError(f"{where}: attributes not in schema: {sorted(unknown)}")
        raw = attrs
    values = [_check_value(a, raw.get(a.name), where) for a in schema.attributes]
    return Record(rtype, values)


def parse_instances(doc: dict, schema: Schema | None = None) -> tuple[Schema, list[Instance]]:
    if schema is None:
        if "schema" not in doc:
            raise ParseError("document has no schema and none was supplied")
        schema = Schema.from_json(doc["schema"])
    instances = []
    for i, inst in enumerate(doc.get("instances", [])):
        recs = inst.get("records") or []
        if not recs:
            raise ParseError(f"instance {i}: table has no records")
        records = [parse_record(r, schema, f"instance {i}, record {k}") for k, r in enumerate(recs)]
        instances.append(Instance(Table(records), tokenize(inst.get("summary", ""))))
    return schema, instances


def parse_table_file(path, schema: Schema | None = None) -> list[Instance]:
    """Read a JSON table file; NULL-pads missing attributes."""
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    return parse_instances(doc, schema)[1]


def load_table_file(path, schema: Schema | None = None) -> tuple[Schema, list[Instance]]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return parse_instances(doc, schema)


def dump_table_file(path, schema: Schema, instances: Sequence[Instance]) -> None:
    doc = {"schema": schema.to_json(),
           "instances": [{"records": [r.to_json(schema) for r in inst.table.records],
                          "summary": inst.text} for inst in instances]}
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def encode_table(table: Table, schema: Schema) -> EncodedTable:
    attrs = [np.stack([a.encode(r.values[j]) for r in table.records])
             for j, a in enumerate(schema.attributes)]
    types = np.zeros((len(table.records), schema.n_record_types))
    for i, r in enumerate(table.records):
        types[i, schema.record_types.index(r.type)] = 1.0
    return EncodedTable(attrs, types)


# --------------------------------------------------------------------------
# vocabulary

PAD, BOS, EOS, UNK = 0, 1, 2, 3
SENTINELS = ("<pad>", "<s>", "</s>", "<unk>")


@dataclass
class Vocabulary:
    tokens: list[str] = field(default_factory=list)   # non-sentinel tokens, id = index + 4

    def __post_init__(self):
        self._ids = {t: i + len(SENTINELS) for i, t in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(SENTINELS) + len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def id(self, token: str) -> int:
        return self._ids.get(token, UNK)

    def token(self, i: int) -> str:
        if i < len(SENTINELS):
            return SENTINELS[i]
        return self.tokens[i - len(SENTINELS)]

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.id(t) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.token(i) for i in ids]

    def save(self, path) -> None:
        Path(path).write_text("".join(t + "\n" for t in self.tokens), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        text = Path(path).read_text(encoding="utf-8")
        return cls([line for line in text.split("\n") if line != ""])


def build_vocabulary(instances: Iterable[Instance], min_count: int = 1) -> Vocabulary:
    counts = Counter(t for inst in instances for t in inst.summary)
    return Vocabulary(sorted(t for t, c in counts.items() if c >= min_count))
