"""Simulated one-to-many datagram channel.

Models the LAN multicast path between the monitor and the servers:
every published datagram is independently delayed, jittered, or dropped
per subscriber. Datagram semantics only: no retransmission, no ordering
guarantee beyond what zero jitter implies. The channel owns no clock; it
returns delivery schedules for the engine's event queue.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Union

import numpy as np

from .sensing import ErrorSample

__all__ = [
    "ChannelConfig",
    "ControlCommand",
    "Datagram",
    "Delivery",
    "MulticastChannel",
]


class ControlCommand(Enum):
    """Synchronized workload start/stop broadcast."""

    START_LOAD = "start"
    STOP_LOAD = "stop"


Payload = Union[ErrorSample, ControlCommand]


@dataclass(frozen=True)
class ChannelConfig:
    latency_mean: float = 0.001
    jitter: float = 0.0
    loss_prob: float = 0.0
    rate: float = 10.0  # datagrams per second the monitor publishes

    def __post_init__(self):
        if not 0.0 <= self.loss_prob <= 1.0:
            raise ValueError("loss_prob must be in [0, 1]")
        if self.latency_mean < 0 or self.jitter < 0:
            raise ValueError("latency and jitter must be non-negative")
        if self.rate <= 0:
            raise ValueError("rate must be positive")


@dataclass(frozen=True)
class Datagram:
    send_t: float
    payload: Payload


@dataclass(frozen=True)
class Delivery:
    subscriber: int
    send_t: float
    recv_t: float
    payload: Payload
    dropped: bool


class MulticastChannel:
    """Fan-out channel with per-subscriber independent loss and jitter.

    Subscribers must be registered before traffic starts. Jitter is drawn
    uniformly on [0, jitter]; both the loss and jitter draws are consumed
    for every (datagram, subscriber) pair so that changing one parameter
    does not shift the random stream of the other.
    """

    def __init__(self, config: ChannelConfig, rng: np.random.Generator):
        self.config = config
        self._rng = rng
        self._subscribers: list[int] = []
        self.log: list[Delivery] = []

    def subscribe(self, subscriber: int) -> None:
        if subscriber in self._subscribers:
            raise ValueError(f"subscriber {subscriber} already registered")
        self._subscribers.append(subscriber)

    @property
    def subscribers(self) -> tuple[int, ...]:
        return tuple(self._subscribers)

    def publish(self, datagram: Datagram) -> list[Delivery]:
        """Schedule one datagram to every subscriber; returns deliveries
        (dropped ones included, marked) in subscriber registration order."""
        if not self._subscribers:
            raise RuntimeError("publish before any subscriber registered")
        cfg = self.config
        out = []
        for sub in self._subscribers:
            u_loss = self._rng.random()
            u_jit = self._rng.random()
            dropped = u_loss < cfg.loss_prob
            recv_t = datagram.send_t + cfg.latency_mean + cfg.jitter * u_jit
            d = Delivery(sub, datagram.send_t, recv_t, datagram.payload, dropped)
            self.log.append(d)
            out.append(d)
        return out

    def broadcast_sync_command(self, send_t: float, cmd: ControlCommand) -> list[Delivery]:
        """Publish a start/stop command to all servers at the same instant."""
        return self.publish(Datagram(send_t=send_t, payload=cmd))

    def log_rows(self) -> list[tuple]:
        """Delivery log as (send_t, recv_t, subscriber, kind, dropped) rows."""
        rows = []
        for d in self.log:
            kind = d.payload.value if isinstance(d.payload, ControlCommand) else "error"
            rows.append((d.send_t, d.recv_t, d.subscriber, kind, int(d.dropped)))
        return rows
