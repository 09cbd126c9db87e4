"""Shared builders for randomized CRDT tests.

Message contents are a deterministic function of (author, seq) so that any
two generated states agree on what a given msg_id contains, mirroring the
global-uniqueness invariant of real message ids.
"""

from __future__ import annotations

import random

from citymesh.crdt import AuthorKey, CrdtState, Message

KEY_POOL: tuple[AuthorKey, ...] = tuple(
    AuthorKey.derive(f"key-{i}", trusted=(i % 2 == 0)) for i in range(4)
)


def pool_message(key: AuthorKey, seq: int) -> Message:
    time = (seq * 37 + key.key_id[0]) % 120
    return Message(
        author=key.key_id,
        seq=seq,
        time=time,
        body=key.key_id[:2] + bytes([seq]),
        signature_valid=(seq % 3 != 0),
    )


def random_state(rng: random.Random, max_horizon: int = 40, max_seq: int = 6) -> CrdtState:
    """Arbitrary valid state: per-author seq subsets may have gaps and the
    version map is a high-water mark (>= max stored seq)."""
    horizon = rng.randrange(0, max_horizon + 1)
    messages = {}
    version = {}
    for key in KEY_POOL:
        if rng.random() < 0.3:
            continue
        top = rng.randrange(1, max_seq + 1)
        seqs = [s for s in range(1, top + 1) if rng.random() < 0.6]
        kept = 0
        for seq in seqs:
            m = pool_message(key, seq)
            if m.time >= horizon:
                messages[m.msg_id] = m
                kept = max(kept, seq)
        version[key.key_id] = max(top, kept)
    return CrdtState(messages=messages, version=version, purge_horizon=horizon)


def random_contiguous_state(rng: random.Random, max_seq: int = 6) -> CrdtState:
    """Gap-free state whose version map exactly matches its contents (the
    precondition for exact delta soundness)."""
    messages = {}
    version = {}
    for key in KEY_POOL:
        if rng.random() < 0.3:
            continue
        top = rng.randrange(1, max_seq + 1)
        for seq in range(1, top + 1):
            m = pool_message(key, seq)
            messages[m.msg_id] = m
        version[key.key_id] = top
    return CrdtState(messages=messages, version=version, purge_horizon=0)


def brute_force_merge(a: CrdtState, b: CrdtState) -> CrdtState:
    """Independent union oracle for merge."""
    horizon = max(a.purge_horizon, b.purge_horizon)
    messages = {}
    for source in (a, b):
        for mid, m in source.messages.items():
            if m.time >= horizon:
                messages[mid] = m
    authors = set(a.version) | set(b.version)
    version = {
        author: max(a.version.get(author, 0), b.version.get(author, 0))
        for author in authors
    }
    return CrdtState(messages=messages, version=version, purge_horizon=horizon)
