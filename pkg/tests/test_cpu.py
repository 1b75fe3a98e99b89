from __future__ import annotations

import pytest

from virtplat.asm import assemble
from virtplat.bus import Status
from virtplat.cpu import CpuHalted, CpuState, MisalignedEntry, TrapCause, reset, step

from helpers import BOARD_PLATFORM, boot, build, run_to_stop


class FlatBus:
    """Byte-addressed dictionary memory with fixed latencies, for unit tests."""

    def __init__(self, image: bytes, base: int = 0, latency: int = 0, busy: set[int] = frozenset()):
        self.mem = {base + i: b for i, b in enumerate(image)}
        self.latency = latency
        self.busy = busy
        self.log: list[tuple] = []

    def _resp(self, status, payload=None):
        from virtplat.bus import Response
        return Response(status, payload, self.latency if status is not Status.BUS_ERROR else 0)

    def fetch(self, address, now):
        return self.read(address, 4, now)

    def read(self, address, width, now):
        self.log.append(("R", address, width, now))
        if any(address + i not in self.mem for i in range(width)):
            from virtplat.bus import BUS_ERROR
            return BUS_ERROR
        return self._resp(Status.OK, int.from_bytes(bytes(self.mem[address + i] for i in range(width)), "little"))

    def write(self, address, width, value, now):
        self.log.append(("W", address, width, now))
        if address in self.busy:
            return self._resp(Status.DEVICE_BUSY)
        for i in range(width):
            self.mem[address + i] = (value >> (8 * i)) & 0xFF
        return self._resp(Status.OK)


def run_flat(src: str, n: int, **kw) -> tuple[CpuState, list, FlatBus]:
    img = assemble(src).image + bytes(64)
    img = img + bytes(0x100)
    bus = FlatBus(img, **kw)
    for a in range(0x1000, 0x1100):
        bus.mem[a] = 0
    st = reset(0)
    outs = [step(st, bus, 0xF0) for _ in range(n) if not st.halted]
    return st, outs, bus


def test_one_cycle_per_instruction():
    st, outs, _ = run_flat("addi a0, zero, 1\naddi a0, a0, 1\naddi a0, a0, 1", 3)
    assert st.cycles == 3 and st.regs[10] == 3
    assert [o.cycle for o in outs] == [0, 1, 2]


def test_latency_adds_to_cycles():
    # fetch latency 2 each, plus one data read of latency 2
    st, outs, bus = run_flat("lui t0, 1\nlw a0, 0(t0)", 2, latency=2)
    assert outs[0].latency == 2
    assert outs[1].latency == 4
    assert st.cycles == (1 + 2) + (1 + 4)
    # the data access is issued after the fetch latency
    assert bus.log[-1] == ("R", 0x1000, 4, 3 + 2)


def test_x0_is_hardwired():
    st, _, _ = run_flat("addi zero, zero, 5\nlui zero, 1", 2)
    assert st.regs[0] == 0
    st.regs[0] = 123
    assert st.regs[0] == 0


def test_exit_store_halts_without_transaction():
    st, outs, bus = run_flat("li a0, 7\nsw a0, 0xf0(zero)\nli a0, 8", 3)
    assert st.halted and st.exit_code == 7 and st.pending_trap is None
    assert outs[-1].kind == "halt"
    assert st.pc == 8
    assert not any(e[0] == "W" for e in bus.log)
    with pytest.raises(CpuHalted):
        step(st, bus)


def test_busy_store_is_not_a_trap():
    st, outs, _ = run_flat("lui t0, 1\nsw zero, 0(t0)\naddi a0, zero, 1", 3, busy={0x1000})
    assert not st.halted
    assert outs[1].mem_ops[0].status is Status.DEVICE_BUSY
    assert st.regs[10] == 1


@pytest.mark.parametrize("src,cause,value", [
    ("ecall", TrapCause.ENVIRONMENT_CALL, 0),
    ("ebreak", TrapCause.BREAKPOINT, 0),
    (".word 0xffffffff", TrapCause.ILLEGAL_INSTRUCTION, 0xFFFFFFFF),
    ("li t0, 0x5000\nlw a0, 0(t0)", TrapCause.BUS_ERROR, 0x5000),
    ("li t0, 0x1002\nlw a0, 0(t0)", TrapCause.MISALIGNED_ACCESS, 0x1002),
    ("li t0, 0x1001\nsh a0, 0(t0)", TrapCause.MISALIGNED_ACCESS, 0x1001),
    ("jal zero, 6", TrapCause.MISALIGNED_FETCH, 6),
    ("beq zero, zero, 2", TrapCause.MISALIGNED_FETCH, 2),
])
def test_trap_causes(src, cause, value):
    st, outs, _ = run_flat(src, 4)
    assert st.halted and st.pending_trap.cause is cause
    assert st.pending_trap.value == value
    assert outs[-1].kind == "trap"
    assert st.pc == outs[-1].pc == st.pending_trap.pc


def test_trap_charges_latency_but_no_retire_cycle():
    st, _, _ = run_flat("ecall", 1, latency=3)
    assert st.cycles == 3


def test_jalr_clears_low_bit():
    st, _, _ = run_flat("li t0, 9\njalr ra, t0, 3", 2)
    assert st.pc == 12 and st.regs[1] == 8


def test_misaligned_entry_rejected():
    with pytest.raises(MisalignedEntry):
        reset(2)


def test_wait_cycles_from_platform():
    plat = BOARD_PLATFORM.replace("[device.ram0]\nkind = ram", "[device.ram0]\nkind = ram\nwait_cycles = 5")
    src = "li t0, 0x80000000\nlw a0, 0(t0)\nli t6, 0xf0000000\nsw a0, 0(t6)"
    sim = boot(build(src), plat)
    outs = run_to_stop(sim)
    assert [o.latency for o in outs] == [0, 0, 5, 0, 0, 0]
    assert sim.cpu.cycles == len(outs) + 5


def test_copy_is_independent():
    st = reset(0)
    st.regs[5] = 9
    c = st.copy()
    c.regs[5] = 1
    assert st.regs[5] == 9 and c.regs[0] == 0
