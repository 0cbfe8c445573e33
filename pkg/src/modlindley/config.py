"""YAML instance configs -> validated model specs.

Every validation failure raises ConfigError carrying the dotted path of the
offending key (``v_law.p3``, ``service[1].rate``) so CLI users can find it
without reading a traceback.
"""

from __future__ import annotations

from dataclasses import dataclass

import yaml

from .errors import ConfigError, InstabilityError
from .model1 import Model1Spec
from .model2 import Model2Spec
from .probcore import (
    GeneralLst,
    ModulationChain,
    NegativeMultiplierLaw,
    RationalLst,
    erlang_mixture_lst,
    exponential_lst,
    hyperexponential_lst,
    point_mass_lst,
    time_scaled_lst,
)
from .simulate import SimConfig

MODELS = ("model1", "model1_special", "model2")
LAW_KINDS = ("exponential", "erlang_mixture", "hyperexponential", "point_mass")


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-9
    r_max: int = 2
    search_bound: float | None = None


@dataclass(frozen=True)
class InstanceConfig:
    """A fully validated instance: which model, its spec, and run options."""

    label: str
    model: str
    spec: Model1Spec | Model2Spec
    solver: SolverOptions
    sim: SimConfig


# ---------------------------------------------------------------------------
# schema plumbing


def _as_mapping(node, path: str) -> dict:
    if not isinstance(node, dict):
        raise ConfigError(f"expected a mapping, got {type(node).__name__}", path)
    return node


def _as_list(node, path: str) -> list:
    if not isinstance(node, list):
        raise ConfigError(f"expected a list, got {type(node).__name__}", path)
    return node


def _as_float(node, path: str) -> float:
    if isinstance(node, bool) or not isinstance(node, (int, float)):
        raise ConfigError(f"expected a number, got {node!r}", path)
    return float(node)


def _as_int(node, path: str) -> int:
    if isinstance(node, bool) or not isinstance(node, int):
        raise ConfigError(f"expected an integer, got {node!r}", path)
    return int(node)


def _take(mapping: dict, key: str, path: str, required: bool = True):
    if key not in mapping:
        if required:
            raise ConfigError("required key is missing", f"{path}.{key}" if path else key)
        return None
    return mapping.pop(key)


def _reject_unknown(mapping: dict, path: str) -> None:
    if mapping:
        extra = ", ".join(sorted(str(k) for k in mapping))
        raise ConfigError(f"unknown keys: {extra}", path)


def _float_list(node, path: str, n: int | None = None) -> tuple[float, ...]:
    values = tuple(_as_float(v, f"{path}[{i}]") for i, v in enumerate(_as_list(node, path)))
    if n is not None and len(values) != n:
        raise ConfigError(f"expected {n} entries, got {len(values)}", path)
    return values


# ---------------------------------------------------------------------------
# distribution blocks


def law_from_block(node, path: str) -> RationalLst | GeneralLst:
    """Build one distribution from its config block."""
    block = dict(_as_mapping(node, path))
    kind = _take(block, "kind", path)
    if kind not in LAW_KINDS:
        raise ConfigError(
            f"unknown kind {kind!r}; one of {', '.join(LAW_KINDS)}", f"{path}.kind"
        )
    if kind == "exponential":
        rate = _as_float(_take(block, "rate", path), f"{path}.rate")
        _reject_unknown(block, path)
        if rate <= 0:
            raise ConfigError("rate must be positive", f"{path}.rate")
        return exponential_lst(rate)
    if kind == "erlang_mixture":
        weights = _float_list(_take(block, "weights", path), f"{path}.weights")
        rate = _as_float(_take(block, "rate", path), f"{path}.rate")
        _reject_unknown(block, path)
        try:
            return erlang_mixture_lst(weights, rate)
        except ConfigError as exc:
            raise ConfigError(str(exc), path) from exc
    if kind == "hyperexponential":
        weights = _float_list(_take(block, "weights", path), f"{path}.weights")
        rates = _float_list(_take(block, "rates", path), f"{path}.rates")
        _reject_unknown(block, path)
        try:
            return hyperexponential_lst(weights, rates)
        except ConfigError as exc:
            raise ConfigError(str(exc), path) from exc
    value = _as_float(_take(block, "value", path), f"{path}.value")
    _reject_unknown(block, path)
    if value < 0:
        raise ConfigError("value must be nonnegative", f"{path}.value")
    return point_mass_lst(value)


def _law_list(node, path: str, n: int) -> tuple:
    items = _as_list(node, path)
    if len(items) != n:
        raise ConfigError(f"expected one law per state ({n}), got {len(items)}", path)
    return tuple(law_from_block(item, f"{path}[{i}]") for i, item in enumerate(items))


def _chain_from_block(node, path: str) -> ModulationChain:
    block = dict(_as_mapping(node, path))
    matrix = _as_list(_take(block, "transition_matrix", path), f"{path}.transition_matrix")
    _reject_unknown(block, path)
    rows = [
        _float_list(row, f"{path}.transition_matrix[{i}]") for i, row in enumerate(matrix)
    ]
    try:
        return ModulationChain.from_matrix(rows)
    except ConfigError as exc:
        raise ConfigError(str(exc), f"{path}.transition_matrix") from exc


# ---------------------------------------------------------------------------
# model sections


def _build_model1(data: dict, model: str, chain: ModulationChain) -> Model1Spec:
    n = chain.n_states
    service = _law_list(_take(data, "service", ""), "service", n)
    interarrival = _law_list(_take(data, "interarrival", ""), "interarrival", n)
    v_block = dict(_as_mapping(_take(data, "v_law", ""), "v_law"))
    p1_node = _take(v_block, "p1", "v_law", required=False)
    p2_node = _take(v_block, "p2", "v_law", required=False)
    p1 = 0.0 if p1_node is None else _as_float(p1_node, "v_law.p1")
    p2 = 0.0 if p2_node is None else _as_float(p2_node, "v_law.p2")
    p3 = _as_float(_take(v_block, "p3", "v_law"), "v_law.p3")
    a_node = _take(v_block, "a", "v_law", required=False)
    a = 0.5 if a_node is None else _as_float(a_node, "v_law.a")
    atoms_node = _take(v_block, "atoms", "v_law", required=False)
    _reject_unknown(v_block, "v_law")
    if model == "model1_special" and (p1 != 0.0 or p2 != 0.0):
        raise ConfigError("model1_special requires p1 = p2 = 0", "v_law")
    if min(p1, p2, p3) < 0 or abs(p1 + p2 + p3 - 1.0) > 1e-12:
        raise ConfigError("p1, p2, p3 must be nonnegative and sum to 1", "v_law")
    if p3 == 0.0:
        # No negative branch means no mechanism pulling the workload down;
        # the boundary case is excluded, so report it as an instability.
        raise InstabilityError(
            "v_law.p3 = 0: the recursion needs a positive-probability negative "
            "branch to be stable"
        )
    if atoms_node is None:
        raise ConfigError("required key is missing", "v_law.atoms")
    pairs = []
    for i, entry in enumerate(_as_list(atoms_node, "v_law.atoms")):
        pair = _float_list(entry, f"v_law.atoms[{i}]", 2)
        pairs.append((pair[0], pair[1]))
    try:
        v_negative = NegativeMultiplierLaw(tuple(pairs))
    except ConfigError as exc:
        raise ConfigError(str(exc), "v_law.atoms") from exc
    return Model1Spec(
        chain=chain,
        service=service,
        interarrival=interarrival,
        p1=p1,
        p2=p2,
        p3=p3,
        a=a,
        v_negative=v_negative,
    )


def _build_model2(data: dict, chain: ModulationChain) -> Model2Spec:
    n = chain.n_states
    arrival_rate = _float_list(_take(data, "arrival_rate", ""), "arrival_rate", n)
    gap_rate = _float_list(_take(data, "gap_rate", ""), "gap_rate", n)
    for name, rates in (("arrival_rate", arrival_rate), ("gap_rate", gap_rate)):
        for i, r in enumerate(rates):
            if r <= 0:
                raise ConfigError("rate must be positive", f"{name}[{i}]")
    service = _law_list(_take(data, "service", ""), "service", n)
    service_alt = _law_list(_take(data, "service_alt", ""), "service_alt", n)
    v_block = dict(_as_mapping(_take(data, "v_law", ""), "v_law"))
    p = _as_float(_take(v_block, "p", "v_law"), "v_law.p")
    _reject_unknown(v_block, "v_law")
    if not 0.0 <= p <= 1.0:
        raise ConfigError("p must lie in [0, 1]", "v_law.p")
    return Model2Spec(
        chain=chain,
        arrival_rate=arrival_rate,
        gap_rate=gap_rate,
        service=service,
        service_alt=service_alt,
        p=p,
    )


def _build_solver(node) -> SolverOptions:
    if node is None:
        return SolverOptions()
    block = dict(_as_mapping(node, "solver"))
    tol_node = _take(block, "tol", "solver", required=False)
    r_node = _take(block, "r_max", "solver", required=False)
    bound_node = _take(block, "search_bound", "solver", required=False)
    _reject_unknown(block, "solver")
    tol = 1e-9 if tol_node is None else _as_float(tol_node, "solver.tol")
    r_max = 2 if r_node is None else _as_int(r_node, "solver.r_max")
    bound = None if bound_node is None else _as_float(bound_node, "solver.search_bound")
    if tol <= 0:
        raise ConfigError("tol must be positive", "solver.tol")
    if r_max < 1:
        raise ConfigError("r_max must be at least 1", "solver.r_max")
    if bound is not None and bound <= 0:
        raise ConfigError("search_bound must be positive", "solver.search_bound")
    return SolverOptions(tol=tol, r_max=r_max, search_bound=bound)


def _build_sim(node) -> SimConfig:
    if node is None:
        return SimConfig()
    block = dict(_as_mapping(node, "sim"))
    kwargs = {}
    for key in ("n_steps", "burn_in", "seed", "replications"):
        value = _take(block, key, "sim", required=False)
        if value is not None:
            kwargs[key] = _as_int(value, f"sim.{key}")
    _reject_unknown(block, "sim")
    try:
        return SimConfig(**kwargs)
    except ConfigError as exc:
        raise ConfigError(str(exc), "sim") from exc


# ---------------------------------------------------------------------------
# entry points


def instance_from_mapping(data) -> InstanceConfig:
    """Validate an already-parsed config mapping."""
    data = dict(_as_mapping(data, ""))
    label_node = _take(data, "label", "", required=False)
    label = "" if label_node is None else str(label_node)
    model = _take(data, "model", "")
    if model not in MODELS:
        raise ConfigError(f"unknown model {model!r}; one of {', '.join(MODELS)}", "model")
    chain = _chain_from_block(_take(data, "chain", ""), "chain")
    solver = _build_solver(_take(data, "solver", "", required=False))
    sim = _build_sim(_take(data, "sim", "", required=False))
    if model == "model2":
        spec = _build_model2(data, chain)
    else:
        spec = _build_model1(data, model, chain)
    _reject_unknown(data, "")
    return InstanceConfig(label=label, model=model, spec=spec, solver=solver, sim=sim)


def load_instance(path) -> InstanceConfig:
    """Read a YAML config file and validate it."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            data = yaml.safe_load(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from exc
    if data is None:
        raise ConfigError("config file is empty")
    return instance_from_mapping(data)


# ---------------------------------------------------------------------------
# sweep variants


def model1_variant(
    spec: Model1Spec,
    *,
    chain: ModulationChain | None = None,
    service_scale: float = 1.0,
) -> Model1Spec:
    """Rebuild a contracting-multiplier spec with a new chain and/or service scale."""
    service = tuple(time_scaled_lst(lst, service_scale) for lst in spec.service)
    return Model1Spec(
        chain=spec.chain if chain is None else chain,
        service=service,
        interarrival=spec.interarrival,
        p1=spec.p1,
        p2=spec.p2,
        p3=spec.p3,
        a=spec.a,
        v_negative=spec.v_negative,
    )


def model2_variant(
    spec: Model2Spec,
    *,
    p: float | None = None,
    service_scale: float = 1.0,
    gap_scale: float | None = None,
) -> Model2Spec:
    """Rebuild a sign-flipping spec with a new branch probability / time scales.

    ``service_scale`` stretches the additive service law B; ``gap_scale``
    (default: same as service_scale) stretches the reset gap D by dividing
    its exponential rates.
    """
    if gap_scale is None:
        gap_scale = service_scale
    if gap_scale <= 0:
        raise ConfigError("gap scale factor must be positive")
    service = tuple(time_scaled_lst(lst, service_scale) for lst in spec.service)
    return Model2Spec(
        chain=spec.chain,
        arrival_rate=spec.arrival_rate,
        gap_rate=tuple(g / gap_scale for g in spec.gap_rate),
        service=service,
        service_alt=spec.service_alt,
        p=spec.p if p is None else p,
    )
