"""Shared builders for small hand-made data centres."""

from __future__ import annotations

import pytest

from thermodc.domain import DataCentreState, HostSpec, HostState, VmSpec, VmState, refresh_host
from thermodc.models import Models


def make_state(hosts, vms=(), mapping=None, setpoint_k=291.0, models=None, freq=None):
    """Build a consistent state.

    ``hosts``: iterable of ``(id, rack)`` or ``(id, rack, active)``.
    ``vms``: iterable of ``(id, ram_mb, demand_mhz)``.
    ``mapping``: vm id -> host id; hosts holding VMs become active.
    ``freq``: host id -> freq_idx (defaults to the top level).
    """
    models = models or Models()
    hs = []
    for h in hosts:
        hid, rack = h[0], h[1]
        active = h[2] if len(h) > 2 else False
        hs.append(HostState(HostSpec(hid, rack_id=rack), active=active))
    state = DataCentreState(hosts=hs)
    for vid, ram, demand in vms:
        state.vms[vid] = VmState(VmSpec(vid, 1, ram), demand)
    for vid, hid in (mapping or {}).items():
        host = state.host(hid)
        host.vms.add(vid)
        host.active = True
        state.mapping[vid] = hid
    for hid, idx in (freq or {}).items():
        state.host(hid).freq_idx = idx
    state.cooling.setpoint_k = setpoint_k
    for h in state.hosts:
        refresh_host(state, h, models.power)
    return state


@pytest.fixture
def models():
    return Models()


# one verdict line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
