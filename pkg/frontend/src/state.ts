// Session state: which audio is loaded, which artifacts came back, and the
// per-track mix gains. Gains survive re-conversion keyed by track name.

import type { ConvertArtifacts } from './api';

export interface Track {
  name: string;
  kind: 'speech' | 'midi';
  gain: number;
  midiBytes?: Uint8Array<ArrayBuffer>;
}

export interface SessionState {
  audioBlob: Blob | null;
  audioSource: 'recorded' | 'uploaded' | null;
  tracks: Track[];
  loopPlaying: boolean;
  lastSeed: number | null;
}

export function initialState(): SessionState {
  return {
    audioBlob: null,
    audioSource: null,
    tracks: [],
    loopPlaying: false,
    lastSeed: null,
  };
}

const ARTIFACT_LABELS: Record<string, string> = {
  raw: 'raw contour',
  sparse: 'constraints',
  generated: 'generated melody',
};

export function tracksFromArtifacts(artifacts: ConvertArtifacts, previous: Track[]): Track[] {
  const oldGain = new Map(previous.map((t) => [t.name, t.gain]));
  const tracks: Track[] = [
    { name: 'speech', kind: 'speech', gain: oldGain.get('speech') ?? 1 },
  ];
  for (const key of ['raw', 'sparse', 'generated'] as const) {
    const bytes = artifacts[key];
    if (!bytes) continue;
    const name = ARTIFACT_LABELS[key];
    tracks.push({
      name,
      kind: 'midi',
      gain: oldGain.get(name) ?? 1,
      midiBytes: bytes,
    });
  }
  return tracks;
}

export function setTrackGain(tracks: Track[], name: string, gain: number): Track[] {
  return tracks.map((t) => (t.name === name ? { ...t, gain } : t));
}
