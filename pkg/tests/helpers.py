"""A tiny randomised scheduler for driving RBC-style instances directly."""

from __future__ import annotations


def drive(instances: dict, pool: list, rng, sent_log: list | None = None, max_steps: int = 100_000) -> None:
    """Deliver pooled (src, dst, msg) triples in random order until none remain.

    ``instances`` maps honest party ids to state machines; messages to other
    parties are discarded. Every message an honest party emits is appended to
    ``sent_log`` as (src, msg) if given.
    """
    pool = list(pool)
    for _ in range(max_steps):
        if not pool:
            return
        src, dst, msg = pool.pop(rng.randrange(len(pool)))
        inst = instances.get(dst)
        if inst is None:
            continue
        out, _ = inst.handle(src, msg)
        for to, m in out:
            if sent_log is not None:
                sent_log.append((dst, m))
            pool.append((dst, to, m))
    raise AssertionError("schedule did not quiesce")


def broadcast_pool(src: int, msgs) -> list:
    return [(src, dst, m) for dst, m in msgs]
