// Typed client for the conversion service. MIDI artifacts are kept as the
// exact bytes the server sent; downloads must never re-encode them.

export interface ConvertOptions {
  model: 'gapfill' | 'denoise';
  contour: 'f0' | 'f1' | 'f2' | 'f3';
  technique: 'heuristic' | 'syllable';
  level: 'low' | 'medium' | 'high';
  seed?: number;
}

export interface ConvertArtifacts {
  raw: Uint8Array<ArrayBuffer>;
  generated: Uint8Array<ArrayBuffer>;
  sparse?: Uint8Array<ArrayBuffer>;
}

export interface ConvertResult {
  requestId: string;
  seed: number;
  artifacts: ConvertArtifacts;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    readonly detail: string,
    readonly requestId?: string,
  ) {
    super(detail);
  }

  // Each server error class gets its own wording so users can tell
  // them apart at a glance.
  userMessage(): string {
    switch (this.status) {
      case 400:
        return `Invalid request: ${this.detail}`;
      case 413:
        return `Recording too large: ${this.detail} (keep clips under 30 seconds)`;
      case 422:
        return `Could not decode the audio: ${this.detail} (upload a WAV file)`;
      case 500:
        return `Server error (request ${this.requestId ?? 'unknown'}): ${this.detail}`;
      default:
        return `Unexpected error ${this.status}: ${this.detail}`;
    }
  }
}

function base64ToBytes(b64: string): Uint8Array<ArrayBuffer> {
  const raw = atob(b64);
  const out = new Uint8Array(raw.length);
  for (let i = 0; i < raw.length; i++) out[i] = raw.charCodeAt(i);
  return out;
}

async function throwApiError(res: Response): Promise<never> {
  let code = 'unknown';
  let detail = res.statusText;
  let requestId: string | undefined;
  try {
    const body = await res.json();
    code = body.error ?? code;
    detail = body.detail ?? detail;
    requestId = body.request_id;
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(res.status, code, detail, requestId);
}

export async function convert(
  audio: Blob,
  options: ConvertOptions,
  fetchFn: typeof fetch = fetch,
): Promise<ConvertResult> {
  const form = new FormData();
  form.append('audio', audio, 'speech.wav');
  form.append('config', JSON.stringify(options));
  const res = await fetchFn('/api/convert', { method: 'POST', body: form });
  if (!res.ok) await throwApiError(res);
  const body = await res.json();
  const artifacts: ConvertArtifacts = {
    raw: base64ToBytes(body.artifacts.raw),
    generated: base64ToBytes(body.artifacts.generated),
  };
  if (body.artifacts.sparse) artifacts.sparse = base64ToBytes(body.artifacts.sparse);
  return { requestId: body.request_id, seed: body.config.seed, artifacts };
}

export async function convertAll(
  audio: Blob,
  seed?: number,
  fetchFn: typeof fetch = fetch,
): Promise<Uint8Array<ArrayBuffer>> {
  const form = new FormData();
  form.append('audio', audio, 'speech.wav');
  if (seed !== undefined) form.append('seed', String(seed));
  const res = await fetchFn('/api/convert_all', { method: 'POST', body: form });
  if (!res.ok) await throwApiError(res);
  return new Uint8Array(await res.arrayBuffer());
}
