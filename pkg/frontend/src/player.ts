// Loop mixer: the speech clip plus one synthesized buffer per MIDI track,
// all started sample-aligned and looped at the speech clip's length. Gains
// are GainNodes, so moving a slider never restarts the loop.

import { parseMidi, type MidiNote } from './midi';

// The slice of AudioContext the mixer touches; tests inject a fake.
export interface MixerContext {
  sampleRate: number;
  currentTime: number;
  destination: AudioNode;
  createGain(): GainNode;
  createBufferSource(): AudioBufferSourceNode;
  createBuffer(channels: number, length: number, sampleRate: number): AudioBuffer;
  decodeAudioData(data: ArrayBuffer): Promise<AudioBuffer>;
}

interface LiveTrack {
  gainNode: GainNode;
  source: AudioBufferSourceNode;
}

function synthesizeNotes(
  notes: MidiNote[],
  lengthS: number,
  sampleRate: number,
  makeBuffer: (length: number) => AudioBuffer,
): AudioBuffer {
  const total = Math.max(1, Math.round(lengthS * sampleRate));
  const buffer = makeBuffer(total);
  const data = buffer.getChannelData(0);
  for (const note of notes) {
    const freq = 440 * Math.pow(2, (note.pitch - 69) / 12);
    const start = Math.round(note.onsetS * sampleRate);
    const end = Math.min(total, Math.round((note.onsetS + note.durationS) * sampleRate));
    const amp = 0.25 * (note.velocity / 127);
    const attack = Math.min(64, end - start);
    for (let i = start; i < end && i < total; i++) {
      const t = (i - start) / sampleRate;
      // two partials with a light envelope: plain but pitch-accurate
      let sample = Math.sin(2 * Math.PI * freq * t) + 0.3 * Math.sin(4 * Math.PI * freq * t);
      const release = Math.min(1, (end - i) / 400);
      const rise = Math.min(1, (i - start) / attack);
      data[i] += amp * sample * rise * release;
    }
  }
  return buffer;
}

export class LoopMixer {
  private tracks = new Map<string, LiveTrack>();
  private buffers = new Map<string, AudioBuffer>();
  private loopLengthS = 0;
  playing = false;

  constructor(private context: MixerContext) {}

  // (Re)load the speech clip and MIDI tracks; stops any running loop.
  async load(speech: ArrayBuffer, midiTracks: { name: string; bytes: Uint8Array }[]): Promise<void> {
    this.stop();
    this.buffers.clear();
    const speechBuffer = await this.context.decodeAudioData(speech.slice(0));
    this.loopLengthS = speechBuffer.duration;
    this.buffers.set('speech', speechBuffer);
    for (const track of midiTracks) {
      const notes = parseMidi(track.bytes);
      this.buffers.set(
        track.name,
        synthesizeNotes(notes, this.loopLengthS, this.context.sampleRate, (length) =>
          this.context.createBuffer(1, length, this.context.sampleRate),
        ),
      );
    }
  }

  trackNames(): string[] {
    return [...this.buffers.keys()];
  }

  get loopSeconds(): number {
    return this.loopLengthS;
  }

  start(gains: Map<string, number>): void {
    if (this.playing) return;
    const startAt = this.context.currentTime + 0.05;
    for (const [name, buffer] of this.buffers) {
      const gainNode = this.context.createGain();
      gainNode.gain.value = gains.get(name) ?? 1;
      gainNode.connect(this.context.destination);
      const source = this.context.createBufferSource();
      source.buffer = buffer;
      source.loop = true;
      source.loopEnd = this.loopLengthS;
      source.connect(gainNode);
      source.start(startAt);
      this.tracks.set(name, { gainNode, source });
    }
    this.playing = true;
  }

  // Live gain update; deliberately does not touch sources.
  setGain(name: string, value: number): void {
    const track = this.tracks.get(name);
    if (track) track.gainNode.gain.value = value;
  }

  stop(): void {
    for (const { source, gainNode } of this.tracks.values()) {
      try {
        source.stop();
      } catch {
        // source may not have started yet
      }
      source.disconnect();
      gainNode.disconnect();
    }
    this.tracks.clear();
    this.playing = false;
  }
}
