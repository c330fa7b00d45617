// Just enough Standard MIDI File parsing to schedule playback of the
// artifacts the service returns (format 0/1, tempo map, note on/off).

export interface MidiNote {
  pitch: number;
  onsetS: number;
  durationS: number;
  velocity: number;
}

interface RawEvent {
  tick: number;
  kind: 'on' | 'off' | 'tempo';
  pitch: number;
  velocity: number;
  tempoUs: number;
}

class ByteReader {
  pos = 0;
  constructor(private data: Uint8Array) {}

  remaining(): number {
    return this.data.length - this.pos;
  }

  u8(): number {
    if (this.pos >= this.data.length) throw new Error('truncated MIDI data');
    return this.data[this.pos++];
  }

  u16(): number {
    return (this.u8() << 8) | this.u8();
  }

  u32(): number {
    return this.u16() * 0x10000 + this.u16();
  }

  bytes(n: number): Uint8Array {
    if (this.remaining() < n) throw new Error('truncated MIDI data');
    const out = this.data.subarray(this.pos, this.pos + n);
    this.pos += n;
    return out;
  }

  ascii(n: number): string {
    return String.fromCharCode(...this.bytes(n));
  }

  varlen(): number {
    let value = 0;
    for (let i = 0; i < 4; i++) {
      const b = this.u8();
      value = (value << 7) | (b & 0x7f);
      if (!(b & 0x80)) return value;
    }
    throw new Error('bad variable-length quantity');
  }
}

function parseTrack(reader: ByteReader, events: RawEvent[]): void {
  let tick = 0;
  let runningStatus = -1;
  while (reader.remaining() > 0) {
    tick += reader.varlen();
    let status = reader.u8();
    if (status < 0x80) {
      if (runningStatus < 0) throw new Error('data byte with no running status');
      reader.pos -= 1;
      status = runningStatus;
    }
    if (status === 0xff) {
      const metaType = reader.u8();
      const payload = reader.bytes(reader.varlen());
      if (metaType === 0x51 && payload.length === 3) {
        const tempoUs = (payload[0] << 16) | (payload[1] << 8) | payload[2];
        events.push({ tick, kind: 'tempo', pitch: 0, velocity: 0, tempoUs });
      }
      if (metaType === 0x2f) return;
      continue;
    }
    if (status === 0xf0 || status === 0xf7) {
      reader.bytes(reader.varlen());
      continue;
    }
    const kind = status & 0xf0;
    runningStatus = status;
    if (kind === 0xc0 || kind === 0xd0) {
      reader.u8();
      continue;
    }
    const d1 = reader.u8();
    const d2 = reader.u8();
    if (kind === 0x90) {
      events.push({ tick, kind: d2 > 0 ? 'on' : 'off', pitch: d1, velocity: d2, tempoUs: 0 });
    } else if (kind === 0x80) {
      events.push({ tick, kind: 'off', pitch: d1, velocity: 0, tempoUs: 0 });
    }
  }
}

export function parseMidi(data: Uint8Array): MidiNote[] {
  const reader = new ByteReader(data);
  if (reader.ascii(4) !== 'MThd') throw new Error('not a MIDI file');
  const headerLen = reader.u32();
  reader.u16(); // format
  const nTracks = reader.u16();
  const division = reader.u16();
  reader.bytes(headerLen - 6);
  if (division & 0x8000) throw new Error('SMPTE division not supported');

  const events: RawEvent[] = [];
  for (let i = 0; i < nTracks; i++) {
    if (reader.ascii(4) !== 'MTrk') throw new Error('missing MTrk');
    const length = reader.u32();
    parseTrack(new ByteReader(reader.bytes(length)), events);
  }

  const tempoChanges = events
    .filter((e) => e.kind === 'tempo')
    .sort((a, b) => a.tick - b.tick);
  const tickToSeconds = (tick: number): number => {
    let seconds = 0;
    let prevTick = 0;
    let tempo = 500000;
    for (const change of tempoChanges) {
      if (change.tick >= tick) break;
      seconds += ((change.tick - prevTick) * tempo) / (1e6 * division);
      prevTick = change.tick;
      tempo = change.tempoUs;
    }
    return seconds + ((tick - prevTick) * tempo) / (1e6 * division);
  };

  const notes: MidiNote[] = [];
  const open = new Map<number, { tick: number; velocity: number }[]>();
  const noteEvents = events
    .filter((e) => e.kind !== 'tempo')
    .sort((a, b) => a.tick - b.tick || (a.kind === 'on' ? 1 : 0) - (b.kind === 'on' ? 1 : 0));
  for (const event of noteEvents) {
    if (event.kind === 'on') {
      const stack = open.get(event.pitch) ?? [];
      stack.push({ tick: event.tick, velocity: event.velocity });
      open.set(event.pitch, stack);
    } else {
      const stack = open.get(event.pitch);
      const started = stack?.pop();
      if (started && event.tick > started.tick) {
        const onsetS = tickToSeconds(started.tick);
        notes.push({
          pitch: event.pitch,
          onsetS,
          durationS: tickToSeconds(event.tick) - onsetS,
          velocity: started.velocity,
        });
      }
    }
  }
  notes.sort((a, b) => a.onsetS - b.onsetS || a.pitch - b.pitch);
  return notes;
}
