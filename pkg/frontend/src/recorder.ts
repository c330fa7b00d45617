// Microphone capture to WAV. ScriptProcessorNode hands us raw Float32
// PCM, which we accumulate and encode ourselves; MediaRecorder is no use
// here because it produces compressed containers the service rejects.

import { encodeWav } from './wav';

export const MAX_RECORD_SECONDS = 30;

export interface RecorderCallbacks {
  onLevel?: (rms: number) => void;
  onAutoStop?: () => void;
}

export class MicRecorder {
  private stream: MediaStream | null = null;
  private context: AudioContext | null = null;
  private processor: ScriptProcessorNode | null = null;
  private chunks: Float32Array[] = [];
  private sampleRate = 0;
  recording = false;

  constructor(private callbacks: RecorderCallbacks = {}) {}

  async start(): Promise<void> {
    if (this.recording) return;
    this.stream = await navigator.mediaDevices.getUserMedia({ audio: true });
    this.context = new AudioContext();
    this.sampleRate = this.context.sampleRate;
    const source = this.context.createMediaStreamSource(this.stream);
    this.processor = this.context.createScriptProcessor(4096, 1, 1);
    this.chunks = [];
    let total = 0;
    this.processor.onaudioprocess = (event) => {
      const data = event.inputBuffer.getChannelData(0);
      this.chunks.push(new Float32Array(data));
      total += data.length;
      if (this.callbacks.onLevel) {
        let sum = 0;
        for (let i = 0; i < data.length; i++) sum += data[i] * data[i];
        this.callbacks.onLevel(Math.sqrt(sum / data.length));
      }
      if (total >= MAX_RECORD_SECONDS * this.sampleRate) {
        this.stop();
        this.callbacks.onAutoStop?.();
      }
    };
    source.connect(this.processor);
    this.processor.connect(this.context.destination);
    this.recording = true;
  }

  stop(): Blob {
    if (!this.recording) {
      return this.toBlob();
    }
    this.recording = false;
    this.processor?.disconnect();
    this.stream?.getTracks().forEach((t) => t.stop());
    void this.context?.close();
    this.processor = null;
    this.stream = null;
    this.context = null;
    return this.toBlob();
  }

  private toBlob(): Blob {
    let total = 0;
    for (const chunk of this.chunks) total += chunk.length;
    const cap = MAX_RECORD_SECONDS * this.sampleRate;
    const samples = new Float32Array(Math.min(total, cap));
    let offset = 0;
    for (const chunk of this.chunks) {
      if (offset >= samples.length) break;
      samples.set(chunk.subarray(0, samples.length - offset), offset);
      offset += chunk.length;
    }
    return new Blob([encodeWav(samples, this.sampleRate)], { type: 'audio/wav' });
  }
}
