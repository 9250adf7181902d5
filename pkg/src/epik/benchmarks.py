"""Benchmark model generators.

Five scaling protocol families, each emitted as a deterministic model
file (generation is pure in the family and size, so repeated runs are
byte-identical).  Where the underlying protocol leaves encoding details
open, the choices made here are documented inline; they are picked so
that small instances stay within reach of the explicit-enumeration
baseline while the optimized pipeline scales further.
"""

from __future__ import annotations

from .errors import CheckError

FAMILIES = ("dc", "otp", "rivest_ot", "msg_transmission", "chaum2p")


def generate(family: str, n: int, variant: str | None = None) -> str:
    """Model-file text for the given family instance."""
    if family == "dc":
        return dining_ring(n)
    if family == "otp":
        return one_time_pad(n)
    if family == "rivest_ot":
        return rivest_transfer(n, variant or "first")
    if family == "msg_transmission":
        return message_transmission(n)
    if family == "chaum2p":
        return chaum_two_phase(n)
    raise CheckError(f"unknown benchmark family {family!r}")


def _conj(parts: list[str]) -> str:
    return " & ".join(parts) if parts else "1"


def dining_ring(n: int) -> str:
    """Anonymous-broadcast ring, one payer at most.

    Each participant flips a coin shared with the right-hand neighbour
    (modeled as writing the flip into the neighbour's `left` variable),
    then announces the parity of the two coins it sees, inverted if it
    paid.  The initial condition is the pairwise at-most-one constraint
    over the payer flags, quadratic in n; everything else starts
    unconstrained.  The query: if participant 0 did not pay, it either
    knows nobody else paid, or knows someone else paid without being able
    to name any single payer.  Untimed atoms are evaluated at time 3.
    """
    if n < 3:
        raise CheckError("dining ring needs at least 3 participants")
    ids = range(n)
    vars_ = [f"paid{i}" for i in ids] + [f"coin{i}" for i in ids]
    vars_ += [f"left{i}" for i in ids] + [f"say{i}" for i in ids]
    says = ", ".join(f"say{j}" for j in ids)
    agents = []
    for i in ids:
        agents.append(
            f"agent C{i} {{\n"
            f"  observes: paid{i}, coin{i}, left{i}, {says};\n"
            f"  protocol: rand(coin{i}); left{(i + 1) % n} := coin{i}; "
            f"say{i} := paid{i} ^ coin{i} ^ left{i};\n"
            f"}}"
        )
    init = _conj([f"!(paid{i} & paid{j})" for i in ids for j in ids if i < j])
    nobody = _conj([f"!paid{j}" for j in ids if j > 0])
    somebody = " | ".join(f"paid{j}" for j in ids if j > 0)
    unnamed = _conj([f"!Knows C0 paid{j}" for j in ids if j > 0])
    spec = (
        f"(!paid0 => (Knows C0 ({nobody})) | (Knows C0 ({somebody}) & {unnamed}))"
    )
    return (
        f"vars {', '.join(vars_)};\n\n"
        + "\n".join(agents)
        + f"\n\ninit: {init};\n"
        + f"spec: {spec} @ 3;\n"
    )


def one_time_pad(n: int) -> str:
    """Bitwise encrypted transmission with a wiretapper.

    The sender pads each message bit with a fresh coin and puts the sum
    on the wire, two ticks per bit; the receiver shares the pad by
    observing it, the wiretapper sees only the wire.  Message bits start
    unconstrained.  The query, evaluated at time 2n: the wiretapper
    neither knows the first message bit nor knows its negation.
    """
    if n < 1:
        raise CheckError("message length must be positive")
    ids = range(1, n + 1)
    vars_ = [f"m{i}" for i in ids] + [f"p{i}" for i in ids] + [f"c{i}" for i in ids]
    ms = ", ".join(f"m{i}" for i in ids)
    ps = ", ".join(f"p{i}" for i in ids)
    cs = ", ".join(f"c{i}" for i in ids)
    steps = []
    for i in ids:
        steps.append(f"rand(p{i})")
        steps.append(f"c{i} := m{i} ^ p{i}")
    return (
        f"vars {', '.join(vars_)};\n\n"
        f"agent Alice {{\n"
        f"  observes: {ms}, {ps}, {cs};\n"
        f"  protocol: {'; '.join(steps)};\n"
        f"}}\n"
        f"agent Bob {{\n  observes: {ps}, {cs};\n  protocol: skip;\n}}\n"
        f"agent Eve {{\n  observes: {cs};\n  protocol: skip;\n}}\n\n"
        f"init: 1;\n"
        f"spec: !(Knows Eve m1) & !(Knows Eve (!m1)) @ {2 * n};\n"
    )


def rivest_transfer(n: int, variant: str = "first") -> str:
    """Two-message oblivious transfer with trusted setup randomness.

    Setup randomness (two pads and the receiver's masked slot) lives in
    unconstrained initial variables: the sender holds pads r0/r1, the
    receiver holds a slot bit d plus the pad row it selects.  The
    receiver announces e, its choice masked by d; the sender answers with
    both messages padded crosswise; the receiver unpads its pick.  Three
    ticks.  Derived wire variables start pinned to zero so the baseline
    stays enumerable.  The query, at time 3: if the receiver chose the
    second message, it does not learn the first bit of the other one
    (variant "first"), or any of its bits (variant "all").
    """
    if n < 1:
        raise CheckError("message length must be positive")
    if variant not in ("first", "all"):
        raise CheckError(f"unknown formula variant {variant!r}")
    ids = range(1, n + 1)
    groups = ["m0_", "m1_", "r0_", "r1_", "s_", "f0_", "f1_", "y_"]
    vars_ = [f"{g}{i}" for g in groups for i in ids] + ["d", "c", "e"]

    def row(prefix):
        return ", ".join(f"{prefix}{i}" for i in ids)

    bob_setup = ["e := c ^ d"] + [f"s_{i} := (d & r1_{i}) | (!d & r0_{i})" for i in ids]
    alice_reply = [f"f0_{i} := m0_{i} ^ ((e & r1_{i}) | (!e & r0_{i}))" for i in ids]
    alice_reply += [f"f1_{i} := m1_{i} ^ ((!e & r1_{i}) | (e & r0_{i}))" for i in ids]
    bob_open = [f"y_{i} := ((c & f1_{i}) | (!c & f0_{i})) ^ s_{i}" for i in ids]
    pinned = ["!e"] + [f"!{g}{i}" for g in ("s_", "f0_", "f1_", "y_") for i in ids]
    bits = ids if variant == "all" else [1]
    clauses = [f"!(Knows Bob m0_{i}) & !(Knows Bob (!m0_{i}))" for i in bits]
    return (
        f"vars {', '.join(vars_)};\n\n"
        f"agent Alice {{\n"
        f"  observes: {row('m0_')}, {row('m1_')}, {row('r0_')}, {row('r1_')}, e, "
        f"{row('f0_')}, {row('f1_')};\n"
        f"  protocol: skip; {{ {'; '.join(alice_reply)} }}; skip;\n"
        f"}}\n"
        f"agent Bob {{\n"
        f"  observes: d, c, e, {row('s_')}, {row('f0_')}, {row('f1_')}, {row('y_')};\n"
        f"  protocol: {{ {'; '.join(bob_setup)} }}; skip; {{ {'; '.join(bob_open)} }};\n"
        f"}}\n\n"
        f"init: {_conj(pinned)};\n"
        f"spec: c => {_conj(clauses)} @ 3;\n"
    )


def message_transmission(n: int) -> str:
    """One-bit message over a lossy-but-bounded channel.

    Delivery happens at a nondeterministic tick: the sender proposes
    delivery with a fresh coin each tick and is forced to deliver at the
    deadline n, so arrival within n ticks is guaranteed.  The receiver
    latches the payload through the environment.  The query, at time
    n + 1, nests knowledge five levels deep: the sender knows that the
    receiver knows that the sender knows that the receiver knows that
    the sender knows the message has arrived.
    """
    if n < 1:
        raise CheckError("maximum delay must be positive")
    ids = range(1, n + 1)
    vars_ = ["bit", "got", "msg"] + [f"now{t}" for t in ids]
    nows = ", ".join(f"now{t}" for t in ids)
    steps = [f"{{ rand(now{t}); got := got | now{t} }}" for t in range(1, n)]
    steps.append(f"{{ now{n} := 1; got := got | now{n} }}")
    nest = "got"
    for k in range(5):
        agent = "Alice" if k % 2 == 0 else "Bob"
        nest = f"Knows {agent} ({nest})"
    return (
        f"vars {', '.join(vars_)};\n\n"
        f"agent Alice {{\n"
        f"  observes: bit, got, {nows};\n"
        f"  protocol: {'; '.join(steps)};\n"
        f"}}\n"
        f"agent Bob {{\n  observes: got, msg;\n  protocol: skip;\n}}\n\n"
        f"env {{ msg := msg | (got & bit); }}\n\n"
        f"init: !got & !msg;\n"
        f"horizon: {n + 1};\n"
        f"spec: {nest} @ {n + 1};\n"
    )


def chaum_two_phase(n: int) -> str:
    """Two-phase anonymous broadcast: booking rounds then slot rounds.

    Phase one books transmission slots; to keep the baseline enumerable
    the booking is modeled as a public announcement of each would-be
    sender in its own pre-assigned slot (one tick per round), rather than
    a coin-protected round.  Phase two runs one full coin-ring round per
    slot: everyone flips, announces the parity of the two coins it sees,
    and the slot owner folds its send bit in; participant 0 ors the
    decoded slot bits of the other slots into rcvd1.  The query, at the
    final tick: rcvd1 is set exactly when participant 0 knows some other
    participant is trying to send a 1.
    """
    if n < 2:
        raise CheckError("two-phase broadcast needs at least 2 participants")
    ids = range(n)
    vars_ = [f"want{i}" for i in ids] + [f"c{i}" for i in ids]
    vars_ += [f"say{i}" for i in ids] + ["book", "rcvd1"]
    says = ", ".join(f"say{j}" for j in ids)
    agents = []
    for i in ids:
        actions = []
        for k in ids:  # booking phase, one announcement tick per slot
            actions.append(f"book := want{i}" if k == i else "skip")
        for k in ids:  # slot rounds: flip, announce, decode
            actions.append(f"rand(c{i})")
            source = f"want{i} ^ " if k == i else ""
            actions.append(f"say{i} := {source}c{i} ^ c{(i - 1) % n}")
            if i == 0 and k != 0:
                parity = " ^ ".join(f"say{j}" for j in ids)
                actions.append(f"rcvd1 := rcvd1 | ({parity})")
            else:
                actions.append("skip")
        agents.append(
            f"agent A{i} {{\n"
            f"  observes: want{i}, c{i}, c{(i - 1) % n}, {says}, book, rcvd1;\n"
            f"  protocol: {'; '.join(actions)};\n"
            f"}}"
        )
    pinned = ["!book", "!rcvd1"] + [f"!c{i}" for i in ids] + [f"!say{i}" for i in ids]
    others = " | ".join(f"want{j}" for j in ids if j > 0)
    return (
        f"vars {', '.join(vars_)};\n\n"
        + "\n".join(agents)
        + f"\n\ninit: {_conj(pinned)};\n"
        + f"spec: rcvd1 <=> Knows A0 ({others}) @ {4 * n};\n"
    )
