"""The parasitic adversary: walks the torus, compromises nodes at a bounded
rate, keeps snapshots of the keys it extracted and tries to peel intercepted
packets with them. It never injects or alters traffic."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .crypto import STANDARD, CipherSuite, DecryptFailed, SymmetricKey
from .protocol import Malformed, NodeProtocolState, Packet, peel, _parse_source

# (dx, dy) for east, west, north, south
DIRECTIONS = ((1, 0), (-1, 0), (0, 1), (0, -1))


class AdversaryError(Exception):
    pass


class TooSoon(AdversaryError):
    pass


class NotColocated(AdversaryError):
    pass


class MissingKey(AdversaryError):
    def __init__(self, node):
        super().__init__(f"no stolen key for node {node}")
        self.node = node


class StaleKey(AdversaryError):
    def __init__(self, node):
        super().__init__(f"stolen key for node {node} no longer decrypts")
        self.node = node


@dataclass
class Intercept:
    time: float
    outer_id: int
    depth: int
    encryptors: tuple
    outcome: str


@dataclass
class AdversaryState:
    side: int
    position: tuple = (0, 0)
    min_gap: float = 0.0
    intercept_radius: int = 0
    suite: CipherSuite = STANDARD
    body_size: int = 72
    stolen: dict = field(default_factory=dict)
    loot: dict = field(default_factory=dict)
    intercept_log: list = field(default_factory=list)
    last_compromise: float = -math.inf
    compromises: int = 0

    @property
    def cell(self) -> int:
        x, y = self.position
        return x * self.side + y

    def holds_current(self, node: NodeProtocolState) -> bool:
        k = self.stolen.get(node.id)
        return k is not None and k.version == node.key.version and k.material == node.key.material


def compromise(adv: AdversaryState, node: NodeProtocolState, t: float) -> AdversaryState:
    """Extract the node's current key (a snapshot) and its recent measurements."""
    if node.id != adv.cell:
        raise NotColocated(f"adversary at cell {adv.cell} cannot reach node {node.id}")
    if t - adv.last_compromise < adv.min_gap:
        raise TooSoon(f"compromise at t={t} within {adv.min_gap} of previous at {adv.last_compromise}")
    adv.stolen[node.id] = node.key
    adv.loot[node.id] = list(node.history)
    adv.last_compromise = t
    adv.compromises += 1
    return adv


def attempt_decrypt(adv: AdversaryState, p: Packet):
    """Peel ``p`` with stolen keys only. Succeeds iff every layer key is held."""
    current = p
    while True:
        node = current.outer_id
        key: Optional[SymmetricKey] = adv.stolen.get(node)
        if key is None:
            raise MissingKey(node)
        try:
            kind, out = peel(adv.suite, key, current)
        except DecryptFailed:
            raise StaleKey(node) from None
        if kind == "source":
            return _parse_source(out, adv.body_size, adv.suite.mac_size)
        current = out


def learn_from(adv: AdversaryState, payload) -> Optional[SymmetricKey]:
    """A decrypted unsealed refresh hands the adversary the new key."""
    if getattr(payload, "sealed", True):
        return None
    old = adv.stolen.get(payload.origin)
    if old is None:
        return None
    new = SymmetricKey(payload.key_material, old.version + 1)
    adv.stolen[payload.origin] = new
    return new


def intercept(adv: AdversaryState, p: Packet, t: float):
    """Overhear ``p``; log the attempt and return the payload or ``None``."""
    try:
        payload = attempt_decrypt(adv, p)
        outcome = "decrypted"
    except MissingKey as exc:
        payload, outcome = None, f"missing:{exc.node}"
    except StaleKey as exc:
        payload, outcome = None, f"stale:{exc.node}"
    except Malformed:
        payload, outcome = None, "malformed"
    adv.intercept_log.append(Intercept(t, p.outer_id, p.depth, p.encryptors, outcome))
    if payload is not None:
        learn_from(adv, payload)
    return payload


def torus_step(position, direction: int, side: int):
    dx, dy = DIRECTIONS[direction]
    x, y = position
    return (x + dx) % side, (y + dy) % side


def step_walk(adv: AdversaryState, rng) -> tuple:
    adv.position = torus_step(adv.position, int(rng.integers(4)), adv.side)
    return adv.position


def within_radius(adv: AdversaryState, cell: int) -> bool:
    x, y = divmod(cell, adv.side)
    ax, ay = adv.position
    dx = min((x - ax) % adv.side, (ax - x) % adv.side)
    dy = min((y - ay) % adv.side, (ay - y) % adv.side)
    return dx + dy <= adv.intercept_radius
