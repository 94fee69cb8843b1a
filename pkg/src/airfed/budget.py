"""Append-only communication ledger and the uplink-overhead gain metric."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

from .errors import AirfedError, ConfigurationError


@dataclass
class LedgerEntry:
    round_index: int
    scheme: str
    uplink_uses: int
    uplink_bits: int
    downlink_bits: int


@dataclass
class BudgetLedger:
    entries: list[LedgerEntry] = field(default_factory=list)
    total_uses: int = 0
    total_uplink_bits: int = 0
    total_downlink_bits: int = 0

    def record(
        self,
        round_index: int,
        scheme: str,
        uplink_uses: int,
        uplink_bits: int,
        downlink_bits: int = 0,
    ) -> None:
        if min(uplink_uses, uplink_bits, downlink_bits) < 0:
            raise AirfedError("ledger counts must be non-negative")
        self.entries.append(
            LedgerEntry(round_index, scheme, uplink_uses, uplink_bits, downlink_bits)
        )
        self.total_uses += uplink_uses
        self.total_uplink_bits += uplink_bits
        self.total_downlink_bits += downlink_bits
        self._check()

    def _check(self) -> None:
        assert self.total_uses == sum(e.uplink_uses for e in self.entries)
        assert self.total_uplink_bits == sum(e.uplink_bits for e in self.entries)
        assert self.total_downlink_bits == sum(e.downlink_bits for e in self.entries)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["round", "scheme", "uplink_uses", "uplink_bits", "downlink_bits"]
            )
            for e in self.entries:
                writer.writerow(
                    [e.round_index, e.scheme, e.uplink_uses, e.uplink_bits, e.downlink_bits]
                )


def communication_gain(baseline: BudgetLedger, scheme: BudgetLedger) -> float:
    """Baseline uplink channel uses over the candidate scheme's uses."""
    rounds_b = [e.round_index for e in baseline.entries]
    rounds_s = [e.round_index for e in scheme.entries]
    if rounds_b != rounds_s:
        raise ConfigurationError("ledgers must cover the same rounds")
    if scheme.total_uses == 0:
        return float("nan")
    return baseline.total_uses / scheme.total_uses


def baseline_ledger(
    rounds: list[int], n_clients: int, dim: int, downlink_bits: int = 0
) -> BudgetLedger:
    """Reference overhead: ideal digital links, no compression (K*d symbols
    per aggregation round)."""
    led = BudgetLedger()
    for t in rounds:
        led.record(
            t,
            "baseline",
            n_clients * dim,
            n_clients * dim * 64,
            downlink_bits,
        )
    return led
