from __future__ import annotations

import pytest

from dppsim.model import Action, BUILTIN_SCENARIOS, NetworkModel, NetworkState, SlotOutcome, builtin_scenario


@pytest.fixture(scope="session")
def power_min() -> NetworkModel:
    return builtin_scenario("power-min")


@pytest.fixture(scope="session")
def constrained() -> NetworkModel:
    return builtin_scenario("constrained-2q")


@pytest.fixture(scope="session")
def bursty() -> NetworkModel:
    return builtin_scenario("bursty-1q")


@pytest.fixture(scope="session", params=BUILTIN_SCENARIOS)
def scenario(request) -> NetworkModel:
    return builtin_scenario(request.param)


def table_model(K, M, states, menus, name="synthetic", y0_min=0.0) -> NetworkModel:
    """Model from ``states = [(id, prob)]`` and ``menus = {sid: [(aid, a, b, y)]}``."""
    table = {(sid, aid): SlotOutcome(tuple(a), tuple(b), tuple(y)) for sid, menu in menus.items() for aid, a, b, y in menu}
    return NetworkModel(
        K=K,
        M=M,
        omega_space=tuple((NetworkState(sid), p) for sid, p in states),
        action_sets={sid: tuple(Action(aid) for aid, *_ in menu) for sid, menu in menus.items()},
        eval_fn=lambda act, st: table[st.id, act.id],
        y0_min=y0_min,
        name=name,
    )
