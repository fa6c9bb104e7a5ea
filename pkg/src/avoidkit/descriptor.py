"""Self-contained process descriptors.

A descriptor embeds the base kernel by value plus the list of extension
steps, so an archived file re-instantiates the exact process anywhere;
together with a master seed it reproduces every sampled byte.
"""

from __future__ import annotations

import json
import re
from typing import IO

from .base import (
    CouplingProcess,
    KernelProcess,
    kernel_from_dict,
    kernel_process,
    symmetric_pair_kernel,
    trivial_kernel,
)
from .core import ParameterError, PartialOrder
from .extend import ExtensionProcess

SCHEMA = "avoidkit/process-v1"

_BUILTIN_PAIR = re.compile(r"^pair-k(\d+)$")
_BUILTIN_TRIVIAL = re.compile(r"^trivial:(\d+)$")


def builtin_process(name: str) -> KernelProcess:
    """Resolve builtin base names: "trivial:<n>" and "pair-k<n>"."""
    m = _BUILTIN_TRIVIAL.match(name)
    if m:
        return kernel_process(trivial_kernel(int(m.group(1))))
    m = _BUILTIN_PAIR.match(name)
    if m:
        return kernel_process(symmetric_pair_kernel(int(m.group(1))))
    raise ParameterError(f"unknown builtin {name!r} (use trivial:<n> or pair-k<n>)")


def process_to_descriptor(process: CouplingProcess) -> dict:
    return {"schema": SCHEMA, "process": process.descriptor()}


def process_from_descriptor(doc: dict) -> CouplingProcess:
    if doc.get("schema") != SCHEMA:
        raise ParameterError(f"not a {SCHEMA} document")
    return _resolve(doc["process"])


def _resolve(node: dict) -> CouplingProcess:
    kind = node.get("kind")
    if kind == "kernel":
        table = kernel_from_dict(node["kernel"])
        proc = kernel_process(table)
        rel = node.get("order_relations")
        if rel is not None:
            order = PartialOrder(table.k, frozenset((int(i), int(j)) for i, j in rel))
            proc = proc.as_posac(order)
        return proc
    if kind == "extension":
        base = _resolve(node["base"])
        mode = node["mode"]
        if mode == "add" and base.partial_order is None:
            if not isinstance(base, KernelProcess):
                raise ParameterError(
                    "add step over an unordered composite base; store the order "
                    "on the kernel node")
            base = base.as_posac()
        return ExtensionProcess(base, mode)
    raise ParameterError(f"unknown descriptor node kind {kind!r}")


def save_descriptor(process: CouplingProcess, fp: IO[str]) -> None:
    json.dump(process_to_descriptor(process), fp, indent=1)
    fp.write("\n")


def load_descriptor(fp: IO[str]) -> CouplingProcess:
    return process_from_descriptor(json.load(fp))
