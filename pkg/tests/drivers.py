"""E2PROM driver fixtures for the board platform (eeprom0 at 0x40000000, status at +0x100).

Both drivers program four bytes, read them back and exit with 0 when every
byte verified, 1 otherwise.  One polls the busy flag between writes; the
other trusts the nominal 1 ms programming time and waits a fixed delay.
"""

_PROLOGUE = """
    li   s0, 0x40000000        # cell base
    la   s1, pattern
    li   s2, 4                 # bytes to program
    li   s3, 0
"""

_VERIFY = """
    li   s3, 0
    li   a0, 0
verify:
    add  t0, s1, s3
    lbu  t1, 0(t0)
    add  t0, s0, s3
    lbu  t2, 0(t0)
    beq  t1, t2, same
    li   a0, 1
same:
    addi s3, s3, 1
    blt  s3, s2, verify
    li   t6, 0xf0000000
    sw   a0, 0(t6)
pattern:
    .byte 0x5a, 0xa5, 0x3c, 0xc3
"""

POLL = """
poll:
    lw   t3, 0x100(s0)
    andi t3, t3, 1
    bnez t3, poll
"""

# 2 cycles per iteration: 5002 iterations cover the nominal 10 000-cycle programming time
FIXED_WAIT = """
    li   t3, 5002
spin:
    addi t3, t3, -1
    bnez t3, spin
"""


def _driver(wait: str) -> str:
    loop = f"""
write:
    add  t0, s1, s3
    lbu  t1, 0(t0)
    add  t0, s0, s3
    sb   t1, 0(t0)
{wait}
    addi s3, s3, 1
    blt  s3, s2, write
"""
    return _PROLOGUE + loop + _VERIFY


POLLING_DRIVER = _driver(POLL)
FIXED_WAIT_DRIVER = _driver(FIXED_WAIT)

SLOW_RESPONSE_CAMPAIGN = """\
[campaign]
seed = {seed}

[fault.slow]
target = eeprom0
type = device-internal
name = slow-response
latency_ms_min = 3
latency_ms_max = 10
"""
