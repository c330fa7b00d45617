"""Standard MIDI File reading and writing.

Reading accepts format 0 and 1 files and honors the tempo map when
converting ticks to seconds. Writing emits a single-track format 0 file
at 480 ticks per quarter note and 120 BPM.
"""

import struct

from .errors import MalformedMidi
from .symbolic import Note, PolyNote, PolyTrack, key_to_midi

TICKS_PER_QUARTER = 480
DEFAULT_TEMPO_US = 500000  # microseconds per quarter note, i.e. 120 BPM

_NOTE_OFF = 0x80
_NOTE_ON = 0x90
_META = 0xFF
_META_TEMPO = 0x51
_META_END_OF_TRACK = 0x2F


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def remaining(self) -> int:
        return len(self.data) - self.pos

    def bytes(self, n: int) -> bytes:
        if self.remaining() < n:
            raise MalformedMidi("unexpected end of data")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.bytes(1)[0]

    def u16(self) -> int:
        return struct.unpack(">H", self.bytes(2))[0]

    def u32(self) -> int:
        return struct.unpack(">I", self.bytes(4))[0]

    def varlen(self) -> int:
        value = 0
        for _ in range(4):
            b = self.u8()
            value = (value << 7) | (b & 0x7F)
            if not b & 0x80:
                return value
        raise MalformedMidi("variable-length quantity longer than 4 bytes")


def _parse_track(reader: _Reader):
    """Yield (tick, status, data1, data2 or payload) events from one track."""
    tick = 0
    running_status = None
    while reader.remaining() > 0:
        tick += reader.varlen()
        status = reader.u8()
        if status < 0x80:
            if running_status is None:
                raise MalformedMidi("data byte with no running status")
            reader.pos -= 1
            status = running_status
        if status == _META:
            meta_type = reader.u8()
            payload = reader.bytes(reader.varlen())
            yield tick, _META, meta_type, payload
            if meta_type == _META_END_OF_TRACK:
                return
            continue
        if status in (0xF0, 0xF7):  # sysex
            reader.bytes(reader.varlen())
            continue
        kind = status & 0xF0
        running_status = status
        if kind in (0xC0, 0xD0):  # program change / channel pressure: 1 byte
            reader.u8()
            continue
        d1, d2 = reader.u8(), reader.u8()
        if kind in (_NOTE_ON, _NOTE_OFF):
            yield tick, kind, d1, d2
    raise MalformedMidi("track missing end-of-track event")


def _tick_to_seconds(tempo_changes, division: int, tick: int) -> float:
    """Piecewise-linear tick to seconds using the (tick, tempo) change list."""
    seconds = 0.0
    prev_tick = 0
    tempo = DEFAULT_TEMPO_US
    for change_tick, change_tempo in tempo_changes:
        if change_tick >= tick:
            break
        seconds += (change_tick - prev_tick) * tempo / (1e6 * division)
        prev_tick, tempo = change_tick, change_tempo
    seconds += (tick - prev_tick) * tempo / (1e6 * division)
    return seconds


def read_midi(data: bytes) -> PolyTrack:
    """Parse a format 0/1 Standard MIDI File into a list of timed notes.

    Note-on with velocity 0 counts as note-off; overlapping note-ons on the
    same pitch pair last-on with first-off. Notes left open at end of file
    are closed at the final event tick.
    """
    reader = _Reader(data)
    if reader.bytes(4) != b"MThd":
        raise MalformedMidi("missing MThd header")
    header_len = reader.u32()
    if header_len < 6:
        raise MalformedMidi("MThd too short")
    fmt = reader.u16()
    n_tracks = reader.u16()
    division = reader.u16()
    reader.bytes(header_len - 6)
    if fmt not in (0, 1):
        raise MalformedMidi(f"format {fmt} not supported")
    if division & 0x8000:
        raise MalformedMidi("SMPTE time division not supported")
    if division == 0:
        raise MalformedMidi("zero ticks per quarter note")

    events = []
    for _ in range(n_tracks):
        if reader.bytes(4) != b"MTrk":
            raise MalformedMidi("missing MTrk chunk")
        track = _Reader(reader.bytes(reader.u32()))
        events.extend(_parse_track(track))

    tempo_changes = sorted(
        (tick, int.from_bytes(payload, "big"))
        for tick, status, kind, payload in events
        if status == _META and kind == _META_TEMPO and len(payload) == 3
    )

    notes = []
    open_notes: dict[int, list] = {}
    note_events = sorted(
        (e for e in events if e[1] in (_NOTE_ON, _NOTE_OFF)),
        key=lambda e: (e[0], e[1] == _NOTE_ON),  # offs before ons at equal tick
    )
    last_tick = max((e[0] for e in events), default=0)
    for tick, kind, pitch, velocity in note_events:
        if kind == _NOTE_ON and velocity > 0:
            open_notes.setdefault(pitch, []).append((tick, velocity))
        else:
            stack = open_notes.get(pitch)
            if stack:
                on_tick, on_vel = stack.pop()
                notes.append((pitch, on_tick, tick, on_vel))
    for pitch, stack in open_notes.items():
        for on_tick, on_vel in stack:
            notes.append((pitch, on_tick, max(last_tick, on_tick), on_vel))

    poly = PolyTrack()
    for pitch, on_tick, off_tick, velocity in notes:
        onset = _tick_to_seconds(tempo_changes, division, on_tick)
        offset = _tick_to_seconds(tempo_changes, division, off_tick)
        if offset > onset:
            poly.notes.append(PolyNote(pitch, onset, offset, velocity))
    poly.notes.sort(key=lambda n: (n.onset_s, n.pitch))
    return poly


def _varlen_bytes(value: int) -> bytes:
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append(0x80 | (value & 0x7F))
        value >>= 7
    return bytes(reversed(out))


def write_midi(notes: list[Note]) -> bytes:
    """Encode a monophonic note list as a format 0 SMF."""
    ticks_per_second = TICKS_PER_QUARTER * 1e6 / DEFAULT_TEMPO_US
    events = []  # (tick, order, message bytes)
    for note in notes:
        pitch = key_to_midi(note.key)
        velocity = min(max(int(note.velocity), 1), 127)
        on_tick = int(round(note.onset_s * ticks_per_second))
        off_tick = int(round((note.onset_s + note.duration_s) * ticks_per_second))
        events.append((on_tick, 1, bytes([_NOTE_ON, pitch, velocity])))
        events.append((off_tick, 0, bytes([_NOTE_OFF, pitch, 0])))
    events.sort(key=lambda e: (e[0], e[1]))

    body = bytearray()
    body += _varlen_bytes(0) + bytes([_META, _META_TEMPO, 3])
    body += DEFAULT_TEMPO_US.to_bytes(3, "big")
    prev_tick = 0
    for tick, _, message in events:
        body += _varlen_bytes(tick - prev_tick) + message
        prev_tick = tick
    body += _varlen_bytes(0) + bytes([_META, _META_END_OF_TRACK, 0])

    header = b"MThd" + struct.pack(">IHHH", 6, 0, 1, TICKS_PER_QUARTER)
    return header + b"MTrk" + struct.pack(">I", len(body)) + bytes(body)
