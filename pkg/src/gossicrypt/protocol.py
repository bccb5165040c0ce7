"""Source encryption, probabilistic relay re-encryption, sink unwrapping and
key refreshing.

Wire format (all integers big-endian)::

    packet        = outer_id:u16 | ct_len:u16 | ct
    layer plain   = 0x00 | inner packet            (a relay's wrapping)
                  | 0x01 | source payload           (innermost layer)
    source payload= flag:u8 | origin:u16 | nonce:8 | body_len:u16
                    | body (zero padded to body_size) | H

Only the outermost encryptor id travels in clear; every inner id sits inside
the ciphertext of the layer that wraps it. Data and refresh payloads pad to
the same ``body_size`` so both kinds of packet have equal length.
"""
from __future__ import annotations

import struct
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from .crypto import (
    NONCE_SIZE,
    STANDARD,
    CipherSuite,
    DecryptFailed,
    SinkKeyPair,
    SymmetricKey,
    encode_fields,
    new_nonce,
)

FLAG_DATA = 0x00
FLAG_REFRESH = 0x01          # body carries K' in the clear (variant 1)
FLAG_REFRESH_SEALED = 0x02   # body carries {S_i, K'} sealed to the sink (variant 2)

_LAYER_INNER = 0x00
_LAYER_SOURCE = 0x01
_HDR = struct.Struct(">HH")
_SRC = struct.Struct(f">BH{NONCE_SIZE}sH")

DEFAULT_BODY_SIZE = 72
MAX_NODES = 1 << 16
MAX_DEPTH = 4096


class ProtocolError(Exception):
    pass


class UnknownNode(ProtocolError):
    def __init__(self, node):
        super().__init__(f"node {node} not in key table")
        self.node = node


class Malformed(ProtocolError):
    pass


# -- domain types -------------------------------------------------------------


@dataclass(frozen=True)
class DataPayload:
    m: bytes
    nonce: bytes
    mac_tag: bytes
    origin: int

    flag = FLAG_DATA

    def mac_input(self) -> bytes:
        return encode_fields(self.m, self.nonce, _id_bytes(self.origin))


@dataclass(frozen=True)
class RefreshPayload:
    key_material: bytes
    nonce: bytes
    mac_tag: bytes
    origin: int
    sealed: bool = False

    @property
    def flag(self) -> int:
        return FLAG_REFRESH_SEALED if self.sealed else FLAG_REFRESH

    def mac_input(self) -> bytes:
        return encode_fields(bytes([self.flag]), self.key_material, self.nonce, _id_bytes(self.origin))


@dataclass(frozen=True)
class Packet:
    """An onion of ciphertext layers.

    ``layers`` lists ``(encryptor, ciphertext)`` innermost first, where each
    ciphertext is the full onion as it left that encryptor. Only the last
    entry is ever put on the wire; the rest is sender-side bookkeeping and is
    empty for packets parsed from bytes.
    """

    layers: tuple

    def __post_init__(self):
        if not self.layers:
            raise ValueError("packet needs at least one layer")

    @property
    def outer_id(self) -> int:
        return self.layers[-1][0]

    @property
    def ciphertext(self) -> bytes:
        return self.layers[-1][1]

    @property
    def encryptors(self) -> tuple:
        return tuple(enc for enc, _ in self.layers)

    @property
    def depth(self) -> int:
        return len(self.layers)

    def to_bytes(self) -> bytes:
        return _frame(self.outer_id, self.ciphertext)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Packet":
        outer, ct, rest = _unframe(data)
        if rest:
            raise Malformed(f"{len(rest)} trailing bytes after packet")
        return cls(((outer, ct),))

    def __len__(self):
        return _HDR.size + len(self.ciphertext)


@dataclass(frozen=True)
class Verdict:
    accepted: bool
    reason: Optional[str] = None
    value: object = None

    def __bool__(self):
        return self.accepted


REPLAY = "replay"
BAD_MAC = "bad_mac"
ID_MISMATCH = "id_mismatch"
DECRYPT_FAILED = "decrypt_failed"
UNKNOWN_NODE = "unknown_node"
MALFORMED = "malformed"


@dataclass
class NodeProtocolState:
    id: int
    key: SymmetricKey
    q: float
    suite: CipherSuite = STANDARD
    body_size: int = DEFAULT_BODY_SIZE
    pending_refresh: Optional[SymmetricKey] = None
    deferred: bytes = b""
    history: deque = field(default_factory=lambda: deque(maxlen=1))

    def __post_init__(self):
        _check_id(self.id)
        if not 0.0 <= self.q <= 1.0:
            raise ValueError(f"q must lie in [0, 1], got {self.q}")


@dataclass
class SinkState:
    key_table: dict
    keypair: Optional[SinkKeyPair] = None
    suite: CipherSuite = STANDARD
    body_size: int = DEFAULT_BODY_SIZE
    seen_nonces: set = field(default_factory=set)
    previous: dict = field(default_factory=dict)   # node -> key replaced by its last refresh

    def version_of(self, node: int) -> int:
        return self.key_table[node].version


def provision(n_nodes: int, q: float, rng, suite: CipherSuite = STANDARD,
              body_size: int = DEFAULT_BODY_SIZE, with_keypair: bool = True,
              history_window: int = 1):
    """Create ``n_nodes`` nodes and a sink sharing one key with each."""
    if not 1 <= n_nodes <= MAX_NODES:
        raise ValueError(f"node count must be in [1, {MAX_NODES}]")
    nodes = []
    table = {}
    for i in range(n_nodes):
        key = SymmetricKey.generate(rng)
        nodes.append(NodeProtocolState(i, key, q, suite, body_size,
                                       history=deque(maxlen=history_window)))
        table[i] = key
    keypair = SinkKeyPair.generate(rng) if with_keypair else None
    return nodes, SinkState(table, keypair, suite, body_size)


# -- framing helpers ----------------------------------------------------------


def _check_id(node: int):
    if not 0 <= node < MAX_NODES:
        raise ValueError(f"node id {node} outside 16-bit range")


def _id_bytes(node: int) -> bytes:
    return struct.pack(">H", node)


def _frame(node: int, ct: bytes) -> bytes:
    if len(ct) > 0xFFFF:
        raise ProtocolError("ciphertext exceeds 16-bit length field")
    return _HDR.pack(node, len(ct)) + ct


def _unframe(data: bytes):
    if len(data) < _HDR.size:
        raise Malformed("truncated packet header")
    node, n = _HDR.unpack_from(data)
    ct = data[_HDR.size:_HDR.size + n]
    if len(ct) != n:
        raise Malformed("ciphertext shorter than declared length")
    return node, ct, data[_HDR.size + n:]


def _source_plaintext(flag, origin, nonce, body, tag, body_size):
    if len(body) > body_size:
        raise ProtocolError(f"payload body of {len(body)} bytes exceeds budget {body_size}")
    padded = body + bytes(body_size - len(body))
    return bytes([_LAYER_SOURCE]) + _SRC.pack(flag, origin, nonce, len(body)) + padded + tag


def _parse_source(plain: bytes, body_size: int, mac_size: int):
    need = _SRC.size + body_size + mac_size
    if len(plain) != need:
        raise Malformed(f"source payload is {len(plain)} bytes, expected {need}")
    flag, origin, nonce, blen = _SRC.unpack_from(plain)
    if blen > body_size:
        raise Malformed("body length exceeds budget")
    body = plain[_SRC.size:_SRC.size + blen]
    tag = plain[_SRC.size + body_size:]
    if flag == FLAG_DATA:
        return DataPayload(body, nonce, tag, origin)
    if flag in (FLAG_REFRESH, FLAG_REFRESH_SEALED):
        return RefreshPayload(body, nonce, tag, origin, sealed=flag == FLAG_REFRESH_SEALED)
    raise Malformed(f"unknown payload flag {flag:#x}")


def peel(suite: CipherSuite, key, packet: Packet):
    """Decrypt the outer layer. Returns ``("inner", Packet)`` or ``("source", bytes)``."""
    plain = suite.ske_decrypt(key, packet.ciphertext)
    if not plain:
        raise Malformed("empty layer")
    kind, rest = plain[0], plain[1:]
    if kind == _LAYER_INNER:
        node, ct, tail = _unframe(rest)
        if tail:
            raise Malformed("trailing bytes in inner layer")
        inner = packet.layers[:-1] if len(packet.layers) > 1 else ((node, ct),)
        if inner[-1] != (node, ct):
            raise Malformed("inner layer disagrees with sender bookkeeping")
        return "inner", Packet(inner)
    if kind == _LAYER_SOURCE:
        return "source", rest
    raise Malformed(f"unknown layer kind {kind:#x}")


# -- source / relay -----------------------------------------------------------


def _seal_source(node: NodeProtocolState, flag: int, body: bytes, nonce: bytes, tag: bytes, rng) -> Packet:
    plain = _source_plaintext(flag, node.id, nonce, body, tag, node.body_size)
    return Packet(((node.id, node.suite.ske_encrypt(node.key, plain, rng)),))


def source_encrypt(node: NodeProtocolState, m: bytes, rng) -> Packet:
    """Encrypt measurement ``m`` under the node's current key."""
    nonce = new_nonce(rng)
    tag = node.suite.mac(node.key, DataPayload(m, nonce, b"", node.id).mac_input())
    node.history.append(m)
    return _seal_source(node, FLAG_DATA, bytes(m), nonce, tag, rng)


def relay_process(node: NodeProtocolState, p: Packet, rng, coin: Optional[float] = None) -> Packet:
    """Forward ``p``, wrapping it in a new layer with probability ``node.q``.

    ``coin`` overrides the uniform draw; the packet passes unchanged when the
    draw exceeds ``q``.
    """
    x = rng.random() if coin is None else coin
    if x > node.q:
        return p
    plain = bytes([_LAYER_INNER]) + p.to_bytes()
    ct = node.suite.ske_encrypt(node.key, plain, rng)
    return Packet(p.layers + ((node.id, ct),))


# -- key refreshing -----------------------------------------------------------


def rgen_fire(node: NodeProtocolState, rng) -> SymmetricKey:
    """Handle an RGen event: draw K' and hold it until the next report."""
    if node.pending_refresh is None:
        node.pending_refresh = node.key.refreshed(rng)
    return node.pending_refresh


def rgen_schedule(lambda_r: float, horizon: float, rng) -> list:
    """Event times of a Poisson process of rate ``lambda_r`` on ``[0, horizon)``."""
    if lambda_r < 0:
        raise ValueError("lambda_r must be non-negative")
    times = []
    if lambda_r == 0:
        return times
    t = rng.exponential(1.0 / lambda_r)
    while t < horizon:
        times.append(float(t))
        t += rng.exponential(1.0 / lambda_r)
    return times


def refresh_build_replicas(node: NodeProtocolState, sink_pub: Optional[bytes], rng, replicas: int = 1):
    """Build ``replicas`` copies of one refresh message and switch the node to K'.

    Copies share a nonce so the sink's replay cache absorbs duplicates.
    With ``sink_pub`` the new key travels sealed to the sink together with the
    node id; without it K' is carried in the clear inside the source layer.
    """
    if node.pending_refresh is None:
        raise ProtocolError(f"node {node.id} has no pending refresh")
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    new_key = node.pending_refresh
    if sink_pub is None:
        material = new_key.material
    else:
        material = node.suite.pke_encrypt(sink_pub, _id_bytes(node.id) + new_key.material, rng)
    nonce = new_nonce(rng)
    draft = RefreshPayload(material, nonce, b"", node.id, sealed=sink_pub is not None)
    tag = node.suite.mac(node.key, draft.mac_input())
    packets = [_seal_source(node, draft.flag, material, nonce, tag, rng) for _ in range(replicas)]
    node.key = new_key
    node.pending_refresh = None
    return packets, new_key


def refresh_build(node: NodeProtocolState, sink_pub: Optional[bytes], rng):
    packets, new_key = refresh_build_replicas(node, sink_pub, rng, 1)
    return packets[0], new_key


def node_report(node: NodeProtocolState, m: bytes, rng, sink_pub: Optional[bytes] = None,
                replicas: int = 1) -> list:
    """Packets a node emits for one data-report slot.

    A pending refresh takes the slot; the displaced measurement is prepended
    to the next data report.
    """
    if node.pending_refresh is not None:
        node.deferred += bytes(m)
        node.history.append(m)
        packets, _ = refresh_build_replicas(node, sink_pub, rng, replicas)
        return packets
    body, node.deferred = node.deferred + bytes(m), b""
    return [source_encrypt(node, body, rng)]


# -- sink ---------------------------------------------------------------------


def _unwrap(sink: SinkState, p: Packet, allow_previous: bool):
    current = p
    used_previous = False
    for _ in range(MAX_DEPTH):
        node = current.outer_id
        if node not in sink.key_table:
            raise UnknownNode(node)
        try:
            kind, out = peel(sink.suite, sink.key_table[node], current)
        except DecryptFailed:
            if not allow_previous or node not in sink.previous:
                raise
            kind, out = peel(sink.suite, sink.previous[node], current)
            used_previous = True
        if kind == "source":
            payload = _parse_source(out, sink.body_size, sink.suite.mac_size)
            if payload.origin != node:
                raise Malformed(f"innermost layer from {node} claims origin {payload.origin}")
            return payload, used_previous
        current = out
    raise Malformed("layer nesting too deep")


def sink_unwrap(sink: SinkState, p: Packet):
    """Peel every layer with the sink's current keys; return the source payload."""
    return _unwrap(sink, p, False)[0]


def _fresh(sink: SinkState, payload) -> bool:
    return (payload.origin, payload.nonce) not in sink.seen_nonces


def sink_verify_data(sink: SinkState, d: DataPayload) -> Verdict:
    if not _fresh(sink, d):
        return Verdict(False, REPLAY)
    if not sink.suite.mac_verify(sink.key_table[d.origin], d.mac_input(), d.mac_tag):
        return Verdict(False, BAD_MAC)
    sink.seen_nonces.add((d.origin, d.nonce))
    return Verdict(True, value=d.m)


def sink_process_refresh(sink: SinkState, r: RefreshPayload) -> Verdict:
    if not _fresh(sink, r):
        return Verdict(False, REPLAY)
    old = sink.key_table[r.origin]
    if not sink.suite.mac_verify(old, r.mac_input(), r.mac_tag):
        return Verdict(False, BAD_MAC)
    if r.sealed:
        if sink.keypair is None:
            raise ProtocolError("sealed refresh received but sink has no key pair")
        try:
            opened = sink.suite.pke_decrypt(sink.keypair.private, r.key_material)
        except DecryptFailed:
            return Verdict(False, DECRYPT_FAILED)
        if len(opened) < 2 or struct.unpack(">H", opened[:2])[0] != r.origin:
            return Verdict(False, ID_MISMATCH)
        material = opened[2:]
    else:
        material = r.key_material
    try:
        new_key = SymmetricKey(material, old.version + 1)
    except ValueError:
        return Verdict(False, MALFORMED)
    sink.seen_nonces.add((r.origin, r.nonce))
    sink.previous[r.origin] = old
    sink.key_table[r.origin] = new_key
    return Verdict(True, value=new_key)


def sink_receive(sink: SinkState, p: Packet) -> Verdict:
    """Unwrap and dispatch; every failure becomes a discard verdict.

    A packet that only opens with a node's pre-refresh key is never accepted;
    it is reported as a replay when it repeats a seen nonce (a late refresh
    replica) and as a decryption failure otherwise.
    """
    try:
        payload, stale = _unwrap(sink, p, True)
    except UnknownNode:
        return Verdict(False, UNKNOWN_NODE)
    except DecryptFailed:
        return Verdict(False, DECRYPT_FAILED)
    except Malformed:
        return Verdict(False, MALFORMED)
    if stale:
        return Verdict(False, DECRYPT_FAILED if _fresh(sink, payload) else REPLAY)
    if isinstance(payload, RefreshPayload):
        return sink_process_refresh(sink, payload)
    return sink_verify_data(sink, payload)


def forward(path_nodes, packet: Packet, rng, coins=None) -> Packet:
    """Carry ``packet`` through ``path_nodes`` (relays only, source excluded)."""
    for i, node in enumerate(path_nodes):
        packet = relay_process(node, packet, rng, None if coins is None else coins[i])
    return packet
