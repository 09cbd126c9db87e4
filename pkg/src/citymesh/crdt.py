"""State-based CRDT message store replicated on citizen devices, street
lights, and the command center.

The replicated value is a grow-only message set plus per-author sequence
numbers and a purge horizon. States form a join-semilattice: ``merge`` is
commutative, associative, and idempotent, so replicas can exchange states in
any order and converge. Time-horizon purging bounds growth; the version map
is a high-water mark (it survives purging so stale sequence numbers are
never reused).

Forwarding review is per-replica, not replicated: whether *this* device's
user has approved relaying a message is local metadata, so it lives on
:class:`ReplicaStore` rather than inside the lattice state.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Mapping

from .core import CityMeshError, DecodingError, NodeId, SimTime

KEY_BYTES = 32

# Wire layout, big-endian throughout:
#   header: purge_horizon u64, author count u32
#   per author: key_id 32 B, max seq u64
#   per message: author 32 B, seq u64, time u64, body length u32, body, flag u8
_HEADER = struct.Struct(">QI")
_AUTHOR_ROW = struct.Struct(">32sQ")
_MSG_HEAD = struct.Struct(">32sQQI")


class MessageRejected(CityMeshError):
    """A local insert violated per-author sequencing or the purge horizon."""


class HorizonError(CityMeshError):
    """The purge horizon can only move forward."""


class ApprovalError(CityMeshError):
    """Review decision referenced a message that is not held on this replica."""


@dataclass(frozen=True)
class AuthorKey:
    """Public-key identity of an author; ``trusted`` marks a pre-shared
    first-responder key."""

    key_id: bytes
    trusted: bool = False

    def __post_init__(self) -> None:
        if len(self.key_id) != KEY_BYTES:
            raise ValueError(f"key_id must be {KEY_BYTES} bytes")

    @classmethod
    def derive(cls, label: str, trusted: bool = False) -> "AuthorKey":
        """Deterministic key for scenarios and tests (no real crypto here)."""
        return cls(hashlib.sha256(label.encode()).digest(), trusted=trusted)


MsgId = tuple[bytes, int]


@dataclass(frozen=True)
class Message:
    author: bytes
    seq: int
    time: SimTime
    body: bytes
    signature_valid: bool = True

    def __post_init__(self) -> None:
        if len(self.author) != KEY_BYTES:
            raise ValueError(f"author must be a {KEY_BYTES}-byte key id")
        if self.seq < 1:
            raise ValueError("message seq numbers start at 1")
        if self.time < 0:
            raise ValueError("message time must be non-negative")

    @property
    def msg_id(self) -> MsgId:
        return (self.author, self.seq)


class ForwardDecision(Enum):
    AUTO_FORWARD = "auto-forward"
    HOLD_FOR_REVIEW = "hold-for-review"


@dataclass(frozen=True)
class CrdtState:
    """One replica's full mergeable state. Treat the dict fields as frozen."""

    messages: dict[MsgId, Message] = field(default_factory=dict)
    version: dict[bytes, int] = field(default_factory=dict)
    purge_horizon: SimTime = 0

    @classmethod
    def empty(cls) -> "CrdtState":
        return cls()


def merge(a: CrdtState, b: CrdtState) -> CrdtState:
    """Join of two states: message union above the max purge horizon,
    pointwise-max versions. Argument order never matters."""
    horizon = max(a.purge_horizon, b.purge_horizon)
    messages = {
        mid: m
        for source in (a.messages, b.messages)
        for mid, m in source.items()
        if m.time >= horizon
    }
    version = dict(a.version)
    for author, seq in b.version.items():
        if seq > version.get(author, 0):
            version[author] = seq
    return CrdtState(messages=messages, version=version, purge_horizon=horizon)


def add_message(s: CrdtState, m: Message) -> CrdtState:
    """Insert a locally authored message; sequencing must be gapless."""
    expected = s.version.get(m.author, 0) + 1
    if m.seq != expected:
        raise MessageRejected(
            f"seq {m.seq} for author {m.author[:4].hex()} rejected, expected {expected}"
        )
    if m.time < s.purge_horizon:
        raise MessageRejected(f"message time {m.time} below purge horizon {s.purge_horizon}")
    messages = dict(s.messages)
    messages[m.msg_id] = m
    version = dict(s.version)
    version[m.author] = m.seq
    return replace(s, messages=messages, version=version)


def add_messages(s: CrdtState, msgs: Iterable[Message]) -> CrdtState:
    """Bulk insert with one copy; same sequencing rules as add_message."""
    messages = dict(s.messages)
    version = dict(s.version)
    for m in msgs:
        expected = version.get(m.author, 0) + 1
        if m.seq != expected:
            raise MessageRejected(
                f"seq {m.seq} for author {m.author[:4].hex()} rejected, expected {expected}"
            )
        if m.time < s.purge_horizon:
            raise MessageRejected(
                f"message time {m.time} below purge horizon {s.purge_horizon}"
            )
        messages[m.msg_id] = m
        version[m.author] = m.seq
    return replace(s, messages=messages, version=version)


def delta(local: CrdtState, remote_version: Mapping[bytes, int]) -> CrdtState:
    """Minimal sub-state that brings a remote at ``remote_version`` up to
    ``local``: only messages above the remote's per-author high-water mark,
    plus the full version map and horizon so the merge is exact."""
    messages = {
        mid: m
        for mid, m in local.messages.items()
        if m.seq > remote_version.get(m.author, 0)
    }
    return CrdtState(
        messages=messages,
        version=dict(local.version),
        purge_horizon=local.purge_horizon,
    )


def forward_decision(m: Message, known: Iterable[AuthorKey]) -> ForwardDecision:
    """Auto-forward only verifiably signed messages from known trusted keys;
    everything else is held for review by the device's user."""
    if not m.signature_valid:
        return ForwardDecision.HOLD_FOR_REVIEW
    for key in known:
        if key.key_id == m.author and key.trusted:
            return ForwardDecision.AUTO_FORWARD
    return ForwardDecision.HOLD_FOR_REVIEW


def purge(s: CrdtState, horizon: SimTime) -> CrdtState:
    """Drop messages older than ``horizon``; versions are retained so purged
    sequence numbers can never be reused."""
    if horizon < s.purge_horizon:
        raise HorizonError(f"purge horizon cannot regress from {s.purge_horizon} to {horizon}")
    messages = {mid: m for mid, m in s.messages.items() if m.time >= horizon}
    return CrdtState(messages=messages, version=dict(s.version), purge_horizon=horizon)


def encode_state(s: CrdtState) -> bytes:
    parts = [_HEADER.pack(s.purge_horizon, len(s.version))]
    for author in sorted(s.version):
        parts.append(_AUTHOR_ROW.pack(author, s.version[author]))
    for mid in sorted(s.messages):
        m = s.messages[mid]
        parts.append(_MSG_HEAD.pack(m.author, m.seq, m.time, len(m.body)))
        parts.append(m.body)
        parts.append(b"\x01" if m.signature_valid else b"\x00")
    return b"".join(parts)


def decode_state(data: bytes) -> CrdtState:
    view = memoryview(data)
    if len(view) < _HEADER.size:
        raise DecodingError("truncated state header")
    horizon, n_authors = _HEADER.unpack_from(view, 0)
    offset = _HEADER.size
    version: dict[bytes, int] = {}
    for _ in range(n_authors):
        if offset + _AUTHOR_ROW.size > len(view):
            raise DecodingError("truncated author table")
        key_id, seq = _AUTHOR_ROW.unpack_from(view, offset)
        version[key_id] = seq
        offset += _AUTHOR_ROW.size
    messages: dict[MsgId, Message] = {}
    while offset < len(view):
        if offset + _MSG_HEAD.size > len(view):
            raise DecodingError("truncated message record")
        author, seq, time, body_len = _MSG_HEAD.unpack_from(view, offset)
        offset += _MSG_HEAD.size
        if offset + body_len + 1 > len(view):
            raise DecodingError("truncated message body")
        body = bytes(view[offset : offset + body_len])
        offset += body_len
        flag = view[offset]
        offset += 1
        m = Message(author, seq, time, body, signature_valid=bool(flag))
        messages[m.msg_id] = m
    return CrdtState(messages=messages, version=version, purge_horizon=horizon)


def encoded_size(s: CrdtState) -> int:
    """Serialized size in bytes of the full state."""
    return len(encode_state(s))


class ReplicaStore:
    """One node's replica: the lattice state plus local review metadata.

    ``held`` messages arrived from authors the user does not trust and are
    stored but excluded from everything this replica offers to peers until
    approved; ``denied`` messages stay readable locally but are never
    offered. Locally authored messages are always forwardable.
    """

    def __init__(self, owner: NodeId, own_key: AuthorKey, known: Iterable[AuthorKey] = ()):
        self.owner = owner
        self.own_key = own_key
        self.known: dict[bytes, AuthorKey] = {k.key_id: k for k in known}
        self.known[own_key.key_id] = own_key
        self.state = CrdtState.empty()
        self.held: set[MsgId] = set()
        self.denied: set[MsgId] = set()

    def post(self, body: bytes, time: SimTime, signature_valid: bool = True) -> Message:
        seq = self.state.version.get(self.own_key.key_id, 0) + 1
        m = Message(self.own_key.key_id, seq, time, body, signature_valid=signature_valid)
        self.state = add_message(self.state, m)
        return m

    def receive(self, incoming: CrdtState) -> list[Message]:
        """Merge a peer's offered state; returns newly stored messages in
        deterministic order and holds the untrusted ones for review."""
        merged = merge(self.state, incoming)
        new_ids = sorted(merged.messages.keys() - self.state.messages.keys())
        self.state = merged
        fresh = []
        for mid in new_ids:
            m = merged.messages[mid]
            fresh.append(m)
            if m.author == self.own_key.key_id:
                continue
            if forward_decision(m, self.known.values()) is ForwardDecision.HOLD_FOR_REVIEW:
                self.held.add(mid)
        return fresh

    def approve(self, msg_id: MsgId, approved: bool) -> None:
        if msg_id not in self.held:
            raise ApprovalError(f"message {msg_id[0][:4].hex()}:{msg_id[1]} is not held here")
        self.held.discard(msg_id)
        if not approved:
            self.denied.add(msg_id)

    def offer(self) -> CrdtState:
        """Full state as offered to peers: held and denied messages excluded,
        version map intact (held messages still count toward versions)."""
        restricted = self.held | self.denied
        if not restricted:
            return self.state
        messages = {
            mid: m for mid, m in self.state.messages.items() if mid not in restricted
        }
        return CrdtState(
            messages=messages,
            version=dict(self.state.version),
            purge_horizon=self.state.purge_horizon,
        )

    def offer_delta(self, remote_version: Mapping[bytes, int]) -> CrdtState:
        return delta(self.offer(), remote_version)

    def purge(self, horizon: SimTime) -> None:
        self.state = purge(self.state, horizon)
        self.held &= self.state.messages.keys()
        self.denied &= self.state.messages.keys()

    @property
    def message_count(self) -> int:
        return len(self.state.messages)

    @property
    def size_bytes(self) -> int:
        return encoded_size(self.state)
