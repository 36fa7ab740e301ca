import random

import pytest

from nvmsim import SimParams, Simulator, parse, run_until_idle
from nvmsim.model_core import BLOCK_SIZE, PAGE_SIZE
from nvmsim.trace import Fence, Store, generate, GenSpec


def page_addr(page: int, block: int = 0) -> int:
    return page * PAGE_SIZE + block * BLOCK_SIZE


def trace_text(*addrs_or_fences) -> str:
    lines = []
    for item in addrs_or_fences:
        lines.append("F" if item == "F" else f"S 0x{item:x}")
    return "\n".join(lines) + "\n"


def run_sim(scheme: str, text: str, **params) -> Simulator:
    defaults = dict(levels=4, ideal_caches=True)
    defaults.update(params)
    sim = Simulator(SimParams(scheme=scheme, **defaults), parse(text))
    run_until_idle(sim)
    return sim


def random_trace_text(rng: random.Random, stores: int, pages: int, fence_every: int = 0) -> str:
    items = []
    for i in range(stores):
        if fence_every and i and i % fence_every == 0:
            items.append("F")
        items.append(page_addr(rng.randrange(pages), rng.randrange(64)))
    return trace_text(*items)


@pytest.fixture
def rng():
    return random.Random(1234)
