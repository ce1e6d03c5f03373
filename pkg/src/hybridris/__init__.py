"""Energy-efficiency optimization for a hybrid active-passive RIS transmitter."""

from .scenario import (
    ChannelSet,
    Scenario,
    channels,
    dbm_to_watt,
    load_scenario,
    save_scenario,
    watt_to_dbm,
)

__all__ = [
    "ChannelSet",
    "Scenario",
    "channels",
    "dbm_to_watt",
    "load_scenario",
    "save_scenario",
    "watt_to_dbm",
]

__version__ = "0.1.0"
