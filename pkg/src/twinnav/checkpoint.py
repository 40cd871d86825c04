"""Versioned npz checkpoint container.

One flat namespace of float64/int64 arrays keyed by dotted paths, e.g.
`actor.l2.weights`. Layer dims travel with the arrays, so loading rebuilds
the exact structure; round-trips are bit-exact (see docs/formats.md).
"""

from __future__ import annotations

import numpy as np

from .errors import ContractViolation
from .nets import ActorParams, CriticParams, LayerParams, AdamState

FORMAT_VERSION = 1


def _layer_entries(prefix: str, layer: LayerParams) -> dict:
    return {f"{prefix}.weights": layer.weights, f"{prefix}.bias": layer.bias}


def actor_entries(prefix: str, params: ActorParams) -> dict:
    out = {}
    for name, layer in (("l1", params.l1), ("l2", params.l2), ("l3", params.l3)):
        out.update(_layer_entries(f"{prefix}.{name}", layer))
    return out


CRITIC_LAYERS = ("state_in", "action_in", "merge", "head")


def critic_entries(prefix: str, params: CriticParams) -> dict:
    out = {}
    for name in CRITIC_LAYERS:
        out.update(_layer_entries(f"{prefix}.{name}", getattr(params, name)))
    return out


def adam_entries(prefix: str, state: AdamState) -> dict:
    out = {f"{prefix}.step_count": np.int64(state.step_count)}
    for i, arr in enumerate(state.m):
        out[f"{prefix}.m{i}"] = arr
    for i, arr in enumerate(state.v):
        out[f"{prefix}.v{i}"] = arr
    return out


def _layer_from(entries: dict, prefix: str) -> LayerParams:
    return LayerParams(entries[f"{prefix}.weights"], entries[f"{prefix}.bias"])


def actor_from_entries(entries: dict, prefix: str) -> ActorParams:
    return ActorParams(*(_layer_from(entries, f"{prefix}.{n}") for n in ("l1", "l2", "l3")))


def critic_from_entries(entries: dict, prefix: str) -> CriticParams:
    return CriticParams(*(_layer_from(entries, f"{prefix}.{name}")
                          for name in CRITIC_LAYERS))


def adam_from_entries(entries: dict, prefix: str) -> AdamState:
    m, v = [], []
    i = 0
    while f"{prefix}.m{i}" in entries:
        m.append(entries[f"{prefix}.m{i}"])
        v.append(entries[f"{prefix}.v{i}"])
        i += 1
    return AdamState(m, v, int(entries[f"{prefix}.step_count"]))


def save_entries(path, entries: dict) -> None:
    payload = {"format_version": np.int64(FORMAT_VERSION)}
    payload.update(entries)
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def load_entries(path) -> dict:
    with np.load(path) as data:
        entries = {k: data[k] for k in data.files}
    version = int(entries.pop("format_version", -1))
    if version != FORMAT_VERSION:
        raise ContractViolation(f"unsupported checkpoint format version {version}")
    return entries
