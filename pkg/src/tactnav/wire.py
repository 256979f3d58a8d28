"""Bracelet wire protocol and transports.

Frame layout, 9 bytes:

    [0] header 0xAA
    [1] type: 0x00 Stop, 0x01 Direction, 0x02 GraspPulse, 0x03 MoveBackPulse
    [2..5] motor intensities 0-100 (up, right, down, left)
    [6] reserved, 0x00
    [7] sequence (wrapping counter)
    [8] checksum: XOR of bytes 0..7

Pulse frames carry zero intensity bytes; the device owns the pulse
patterns and the type byte selects them, so pulse timing parameters are
sender-side configuration and never on the wire.
"""

from __future__ import annotations

import socket
from dataclasses import dataclass, field
from typing import BinaryIO, Protocol

from .guidance import Direction, GraspPulse, MotorQuad, MoveBackPulse, Stop, VibrationCommand

FRAME_SIZE = 9
HEADER = 0xAA

TYPE_STOP = 0x00
TYPE_DIRECTION = 0x01
TYPE_GRASP_PULSE = 0x02
TYPE_MOVE_BACK_PULSE = 0x03
_KNOWN_TYPES = (TYPE_STOP, TYPE_DIRECTION, TYPE_GRASP_PULSE, TYPE_MOVE_BACK_PULSE)


class WireError(ValueError):
    pass


class HeaderError(WireError):
    pass


class ChecksumError(WireError):
    pass


class UnknownTypeError(WireError):
    pass


class FrameSizeError(WireError):
    pass


def _checksum(data: bytes) -> int:
    value = 0
    for b in data[:8]:
        value ^= b
    return value


def _quantize(intensity: float) -> int:
    """Round half-up to integer percent."""
    if not 0.0 <= intensity <= 1.0:
        raise ValueError(f"intensity {intensity} outside [0,1]")
    return int(intensity * 100.0 + 0.5)


@dataclass(frozen=True)
class WireFrame:
    data: bytes

    def __post_init__(self):
        if len(self.data) != FRAME_SIZE:
            raise FrameSizeError(f"frame must be {FRAME_SIZE} bytes, got {len(self.data)}")

    @property
    def seq(self) -> int:
        return self.data[7]

    def hex(self) -> str:
        return self.data.hex()


def encode(cmd: VibrationCommand, seq: int) -> WireFrame:
    """Serialize a command; intensities quantized to integer percent."""
    intensities = (0, 0, 0, 0)
    if isinstance(cmd, Stop):
        frame_type = TYPE_STOP
    elif isinstance(cmd, Direction):
        frame_type = TYPE_DIRECTION
        q = cmd.quad
        intensities = tuple(_quantize(v) for v in (q.up, q.right, q.down, q.left))
    elif isinstance(cmd, GraspPulse):
        frame_type = TYPE_GRASP_PULSE
    elif isinstance(cmd, MoveBackPulse):
        frame_type = TYPE_MOVE_BACK_PULSE
    else:
        raise TypeError(f"not a vibration command: {cmd!r}")
    body = bytes([HEADER, frame_type, *intensities, 0x00, seq & 0xFF])
    return WireFrame(body + bytes([_checksum(body)]))


def decode(data: bytes) -> tuple[VibrationCommand, int]:
    """Parse and verify a frame; returns (command, sequence)."""
    if len(data) != FRAME_SIZE:
        raise FrameSizeError(f"expected {FRAME_SIZE} bytes, got {len(data)}")
    if data[0] != HEADER:
        raise HeaderError(f"bad header byte 0x{data[0]:02X}")
    if _checksum(data) != data[8]:
        raise ChecksumError(
            f"checksum mismatch: computed 0x{_checksum(data):02X}, got 0x{data[8]:02X}"
        )
    frame_type = data[1]
    if frame_type not in _KNOWN_TYPES:
        raise UnknownTypeError(f"unknown frame type 0x{frame_type:02X}")
    seq = data[7]
    if frame_type == TYPE_STOP:
        return Stop(), seq
    if frame_type == TYPE_GRASP_PULSE:
        return GraspPulse(), seq
    if frame_type == TYPE_MOVE_BACK_PULSE:
        return MoveBackPulse(), seq
    up, right, down, left = (v / 100.0 for v in data[2:6])
    for v in data[2:6]:
        if v > 100:
            raise WireError(f"intensity byte {v} exceeds 100")
    return Direction(MotorQuad(up, right, down, left)), seq


class Transport(Protocol):
    """Ordered, at-most-once frame delivery per connection."""

    def send(self, frame: WireFrame) -> None: ...

    def close(self) -> None: ...


@dataclass
class MockTransport:
    """Records frames with timestamps; the default device in tests."""

    clock_ms: float = 0.0
    sent: list[tuple[float, WireFrame]] = field(default_factory=list)

    def send(self, frame: WireFrame) -> None:
        self.sent.append((self.clock_ms, frame))

    def close(self) -> None:
        pass

    def advance(self, ms: float) -> None:
        self.clock_ms += ms

    def dump(self) -> str:
        return "".join(f"{int(t)} {frame.hex()}\n" for t, frame in self.sent)


class StreamTransport:
    """Writes raw frames to any binary stream (file, pipe, serial port)."""

    def __init__(self, stream: BinaryIO):
        self._stream = stream

    def send(self, frame: WireFrame) -> None:
        self._stream.write(frame.data)
        self._stream.flush()

    def close(self) -> None:
        self._stream.close()


class TcpTransport:
    """Connects to a device reachable over TCP and streams frames."""

    def __init__(self, host: str, port: int, timeout_s: float = 5.0):
        self._sock = socket.create_connection((host, port), timeout=timeout_s)

    def send(self, frame: WireFrame) -> None:
        self._sock.sendall(frame.data)

    def close(self) -> None:
        self._sock.close()


class CommandSender:
    """Owns the wrapping sequence counter for one connection."""

    def __init__(self, transport: Transport):
        self._transport = transport
        self._seq = 0

    def send(self, cmd: VibrationCommand) -> WireFrame:
        frame = encode(cmd, self._seq)
        self._seq = (self._seq + 1) & 0xFF
        self._transport.send(frame)
        return frame
