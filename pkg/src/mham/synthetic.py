"""Seeded toy corpora with a learnable table-to-summary mapping.

Each record type has one *salient* numeric attribute (type ``k`` uses
attribute ``k % n_attributes``); the others are distractors.  A record is
notable when its salient value lies in the upper half of the value range.  The
summary lists notable records in table order as "<type> near <value>" and
closes with a level word set by how many were notable.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tables import (COMPASS, MODE_SCALE, Attribute, Instance, Record, Schema, Table,
                     TIME_BOUNDARIES, tokenize)

TYPE_NAMES = ("temperature", "windSpeed", "gust", "precipPotential", "skyCover", "windChill",
              "rainChance", "snowChance", "thunderChance", "sleetChance",
              "freezingRainChance", "windDir")

LEVELS = ("low", "moderate", "high")


@dataclass(frozen=True)
class SyntheticSpec:
    n_record_types: int = 4
    n_records: int = 4
    n_attributes: int = 3          # numeric attributes
    low: int = 0
    high: int = 15                 # inclusive
    null_prob: float = 0.1         # chance a distractor value is NULL
    distractors: bool = False      # add time / mode / direction columns

    def schema(self) -> Schema:
        types = tuple(TYPE_NAMES[k] if k < len(TYPE_NAMES) else f"type{k}"
                      for k in range(self.n_record_types))
        attrs = [Attribute(f"a{j}", "number", minimum=min(self.low, 0))
                 for j in range(self.n_attributes)]
        if self.distractors:
            attrs = ([Attribute("time", "time-interval")] + attrs
                     + [Attribute("mode", "mode"), Attribute("dir", "direction")])
        return Schema(types, tuple(attrs))


def salient_index(type_index: int, spec: SyntheticSpec) -> int:
    return type_index % spec.n_attributes


def summarize(records: list[Record], spec: SyntheticSpec, schema: Schema) -> str:
    offset = 1 if spec.distractors else 0
    cut = (spec.low + spec.high) / 2
    notable = []
    for r in records:
        k = schema.record_types.index(r.type)
        v = r.values[offset + salient_index(k, spec)]
        if v > cut:
            notable.append(f"{r.type} near {v}")
    body = " , ".join(notable) if notable else "nothing notable"
    level = LEVELS[min(len(notable) * len(LEVELS) // (spec.n_records + 1), len(LEVELS) - 1)]
    return f"{body} . overall {level} ."


def generate_synthetic_dataset(seed: int, n_tables: int,
                               spec: SyntheticSpec | None = None) -> list[Instance]:
    spec = spec or SyntheticSpec()
    schema = spec.schema()
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_tables):
        records = []
        for _ in range(spec.n_records):
            k = int(rng.integers(spec.n_record_types))
            sal = salient_index(k, spec)
            nums = []
            for j in range(spec.n_attributes):
                v = int(rng.integers(spec.low, spec.high + 1))
                if j != sal and rng.random() < spec.null_prob:
                    v = None
                nums.append(v)
            if spec.distractors:
                a, b = sorted(rng.choice(len(TIME_BOUNDARIES), size=2, replace=False))
                time = f"{TIME_BOUNDARIES[a]}-{TIME_BOUNDARIES[b]}"
                mode = MODE_SCALE[int(rng.integers(len(MODE_SCALE)))]
                direction = COMPASS[int(rng.integers(len(COMPASS)))]
                values = [time] + nums + [mode, direction]
            else:
                values = nums
            records.append(Record(schema.record_types[k], values))
        out.append(Instance(Table(records), tokenize(summarize(records, spec, schema))))
    return out
