"""Random stable instance generators shared across the test suite.

Both generators produce instances that are stable by construction: the
contracting-multiplier draws keep every multiplier magnitude below 1, and
the sign-flipping draws keep the additive branch strictly subcritical, so
the solvers are exercised on valid inputs only.
"""

from __future__ import annotations

import numpy as np

from modlindley.model1 import Model1Spec
from modlindley.model2 import Model2Spec
from modlindley.probcore import (
    ModulationChain,
    NegativeMultiplierLaw,
    exponential_lst,
)


def random_chain(rng: np.random.Generator, n: int) -> ModulationChain:
    P = rng.uniform(0.05, 1.0, size=(n, n))
    P /= P.sum(axis=1, keepdims=True)
    return ModulationChain.from_matrix(P)


def distinct_rates(
    rng: np.random.Generator,
    n: int,
    lo: float,
    hi: float,
    existing: tuple[float, ...] = (),
    min_gap: float = 0.25,
) -> list[float]:
    """Rates in [lo, hi], pairwise (and vs. existing) separated by min_gap."""
    rates: list[float] = []
    pool = list(existing)
    while len(rates) < n:
        r = float(rng.uniform(lo, hi))
        if all(abs(r - other) > min_gap for other in pool):
            rates.append(r)
            pool.append(r)
    return rates


def random_model1_spec(rng: np.random.Generator, n: int) -> Model1Spec:
    chain = random_chain(rng, n)
    service = tuple(exponential_lst(r) for r in distinct_rates(rng, n, 4.0, 14.0))
    interarrival = tuple(
        exponential_lst(r) for r in distinct_rates(rng, n, 0.5, 3.0, min_gap=0.15)
    )
    p1 = float(rng.uniform(0.05, 0.5))
    p2 = float(rng.uniform(0.0, 0.75 * (1.0 - p1)))
    p3 = 1.0 - p1 - p2
    n_atoms = int(rng.integers(1, 3))
    weights = rng.uniform(0.2, 1.0, size=n_atoms)
    weights /= weights.sum()
    values = -rng.uniform(0.2, 0.95, size=n_atoms)
    atoms = tuple((float(v), float(w)) for v, w in zip(values, weights))
    return Model1Spec(
        chain=chain,
        service=service,
        interarrival=interarrival,
        p1=p1,
        p2=p2,
        p3=p3,
        a=float(rng.uniform(0.1, 0.9)),
        v_negative=NegativeMultiplierLaw(atoms),
    )


def random_model2_spec(
    rng: np.random.Generator, n: int, p: float | None = None
) -> Model2Spec:
    chain = random_chain(rng, n)
    # service rates exceed every arrival rate by > 0.5, so the additive
    # branch stays subcritical whatever the chain mixes together
    service = tuple(exponential_lst(float(r)) for r in rng.uniform(8.5, 16.0, n))
    return Model2Spec(
        chain=chain,
        arrival_rate=tuple(float(r) for r in rng.uniform(0.5, 8.0, n)),
        gap_rate=tuple(float(r) for r in rng.uniform(0.5, 8.0, n)),
        service=service,
        service_alt=tuple(exponential_lst(float(r)) for r in rng.uniform(0.5, 8.0, n)),
        p=float(rng.uniform(0.05, 0.95)) if p is None else p,
    )
