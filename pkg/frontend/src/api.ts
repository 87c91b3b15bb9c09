// Thin client for the generation service /v1 API.

import { LayoutDocument } from './layout.js';
import { LetterboxTransform } from './transform.js';

export interface ClassInfo {
  index: number;
  name: string;
  color: string;
}

export interface GenerateResult {
  image: string; // base64 PNG
  latency_ms: number;
  model_id: string;
  request_id: string;
  transform: LetterboxTransform;
}

export interface ServiceError {
  status: number;
  error: string;
  path: string | null;
}

export class ApiClient {
  constructor(private baseUrl: string = '') {}

  async classes(): Promise<ClassInfo[]> {
    const resp = await fetch(`${this.baseUrl}/v1/classes`);
    if (!resp.ok) throw new Error(`classes failed: ${resp.status}`);
    return resp.json();
  }

  async health(): Promise<{ ready: boolean; model_id: string | null }> {
    const resp = await fetch(`${this.baseUrl}/v1/health`);
    if (!resp.ok) throw new Error(`health failed: ${resp.status}`);
    return resp.json();
  }

  async generate(
    backgroundBase64: string,
    layout: LayoutDocument,
    latentSeed: number | null,
  ): Promise<GenerateResult> {
    const resp = await fetch(`${this.baseUrl}/v1/generate`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({
        background: backgroundBase64,
        layout,
        latent_seed: latentSeed,
      }),
    });
    if (!resp.ok) {
      const body = await resp.json().catch(() => ({ error: resp.statusText, path: null }));
      const err: ServiceError = { status: resp.status, error: body.error, path: body.path ?? null };
      throw Object.assign(new Error(`${err.status}: ${err.error}`), { service: err });
    }
    return resp.json();
  }
}
