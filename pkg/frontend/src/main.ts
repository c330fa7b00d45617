// Composition root: wires the recorder, API client, mixer and DOM together.
// All behavior lives in the imported modules so tests can drive them with
// fakes; this file only binds events.

import { ApiError, convert, convertAll, type ConvertOptions } from './api';
import { LoopMixer } from './player';
import { MicRecorder } from './recorder';
import {
  initialState,
  setTrackGain,
  tracksFromArtifacts,
  type SessionState,
  type Track,
} from './state';

const state: SessionState = initialState();
let mixer: LoopMixer | null = null;

const el = <T extends HTMLElement>(id: string): T => {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
};

const errorBox = el<HTMLDivElement>('error-box');
const recordBtn = el<HTMLButtonElement>('record-btn');
const stopBtn = el<HTMLButtonElement>('stop-btn');
const recordStatus = el<HTMLSpanElement>('record-status');
const levelBar = el<HTMLSpanElement>('level-meter').firstElementChild as HTMLDivElement;
const uploadInput = el<HTMLInputElement>('upload-input');
const convertBtn = el<HTMLButtonElement>('convert-btn');
const convertStatus = el<HTMLSpanElement>('convert-status');
const trackList = el<HTMLDivElement>('track-list');
const playBtn = el<HTMLButtonElement>('play-btn');
const stopLoopBtn = el<HTMLButtonElement>('stop-loop-btn');
const downloadList = el<HTMLDivElement>('download-list');
const downloadAllBtn = el<HTMLButtonElement>('download-all-btn');

function showError(message: string): void {
  errorBox.textContent = message;
  errorBox.style.display = 'block';
}

function clearError(): void {
  errorBox.style.display = 'none';
}

function setAudio(blob: Blob, source: 'recorded' | 'uploaded'): void {
  state.audioBlob = blob;
  state.audioSource = source;
  convertBtn.disabled = false;
  downloadAllBtn.disabled = false;
  recordStatus.textContent =
    source === 'recorded' ? 'recording captured' : `loaded ${uploadInput.files?.[0]?.name ?? 'file'}`;
}

const recorder = new MicRecorder({
  onLevel: (rms) => {
    levelBar.style.width = `${Math.min(100, Math.round(rms * 300))}%`;
  },
  onAutoStop: () => {
    recordStatus.textContent = 'stopped at the 30 s cap';
    recordBtn.disabled = false;
    stopBtn.disabled = true;
  },
});

recordBtn.addEventListener('click', async () => {
  clearError();
  try {
    await recorder.start();
    recordBtn.disabled = true;
    stopBtn.disabled = false;
    recordStatus.textContent = 'recording…';
  } catch {
    showError('Microphone access was denied. You can still upload a WAV file below.');
  }
});

stopBtn.addEventListener('click', () => {
  const blob = recorder.stop();
  recordBtn.disabled = false;
  stopBtn.disabled = true;
  levelBar.style.width = '0';
  setAudio(blob, 'recorded');
});

uploadInput.addEventListener('change', () => {
  clearError();
  const file = uploadInput.files?.[0];
  if (file) setAudio(file, 'uploaded');
});

function currentOptions(): ConvertOptions {
  return {
    model: el<HTMLSelectElement>('model-select').value as ConvertOptions['model'],
    contour: el<HTMLSelectElement>('contour-select').value as ConvertOptions['contour'],
    technique: el<HTMLSelectElement>('technique-select').value as ConvertOptions['technique'],
    level: el<HTMLSelectElement>('level-select').value as ConvertOptions['level'],
    seed: Number(el<HTMLInputElement>('seed-input').value) || 0,
  };
}

function renderTracks(): void {
  trackList.textContent = '';
  for (const track of state.tracks) {
    const row = document.createElement('div');
    row.className = 'track';
    const name = document.createElement('span');
    name.className = 'name';
    name.textContent = track.name;
    const slider = document.createElement('input');
    slider.type = 'range';
    slider.min = '0';
    slider.max = '1';
    slider.step = '0.01';
    slider.value = String(track.gain);
    slider.dataset.track = track.name;
    slider.addEventListener('input', () => {
      state.tracks = setTrackGain(state.tracks, track.name, Number(slider.value));
      mixer?.setGain(track.name, Number(slider.value)); // live, loop keeps running
    });
    row.append(name, slider);
    trackList.append(row);
  }
}

function renderDownloads(): void {
  downloadList.textContent = '';
  for (const track of state.tracks) {
    if (!track.midiBytes) continue;
    const link = document.createElement('a');
    const blob = new Blob([track.midiBytes], { type: 'audio/midi' });
    link.href = URL.createObjectURL(blob);
    link.download = `${track.name.replace(/\s+/g, '_')}.mid`;
    link.textContent = `download ${track.name}`;
    link.style.display = 'block';
    downloadList.append(link);
  }
}

convertBtn.addEventListener('click', async () => {
  if (!state.audioBlob) return;
  clearError();
  convertBtn.disabled = true;
  convertStatus.textContent = 'converting…';
  try {
    const result = await convert(state.audioBlob, currentOptions());
    state.lastSeed = result.seed;
    state.tracks = tracksFromArtifacts(result.artifacts, state.tracks);
    renderTracks();
    renderDownloads();
    convertStatus.textContent = `done (seed ${result.seed})`;

    mixer = new LoopMixer(new AudioContext());
    await mixer.load(
      await state.audioBlob.arrayBuffer(),
      state.tracks
        .filter((t): t is Track & { midiBytes: Uint8Array } => t.midiBytes !== undefined)
        .map((t) => ({ name: t.name, bytes: t.midiBytes })),
    );
    playBtn.disabled = false;
    stopLoopBtn.disabled = false;
  } catch (err) {
    convertStatus.textContent = '';
    showError(err instanceof ApiError ? err.userMessage() : `Request failed: ${err}`);
  } finally {
    convertBtn.disabled = false;
  }
});

playBtn.addEventListener('click', () => {
  if (!mixer) return;
  const gains = new Map(state.tracks.map((t) => [t.name, t.gain]));
  mixer.start(gains);
  state.loopPlaying = true;
});

stopLoopBtn.addEventListener('click', () => {
  mixer?.stop();
  state.loopPlaying = false;
});

downloadAllBtn.addEventListener('click', async () => {
  if (!state.audioBlob) return;
  clearError();
  try {
    const zipBytes = await convertAll(state.audioBlob, state.lastSeed ?? undefined);
    const link = document.createElement('a');
    link.href = URL.createObjectURL(new Blob([zipBytes], { type: 'application/zip' }));
    link.download = 'speechmelody_all_configurations.zip';
    link.click();
  } catch (err) {
    showError(err instanceof ApiError ? err.userMessage() : `Request failed: ${err}`);
  }
});
