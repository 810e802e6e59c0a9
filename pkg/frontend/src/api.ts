/**
 * Typed client for the merge service's JSON API. Every call maps 1:1 onto a
 * documented endpoint; the UI holds no state the server does not echo back.
 */

export interface MemberVariant {
  text: string;
  count: number;
}

export interface ClusterPayload {
  id: number;
  centroid_text: string;
  total_count: number;
  members: MemberVariant[];
}

export interface ClassInfo {
  id: number;
  name: string;
  exemplar: string;
}

export interface NextPayload {
  complete: boolean;
  cursor: number;
  progress: { reviewed: number; total: number };
  classes: ClassInfo[];
  cluster: ClusterPayload | null;
}

export interface ActionSpec {
  kind: 'assign' | 'create' | 'skip' | 'undo';
  class_id?: number;
  name?: string;
  exemplar?: string;
}

export type ActionOutcome =
  | { ok: true; cursor: number }
  | { ok: false; status: number; error: string };

export interface TurnInput {
  speaker: 'doctor' | 'patient';
  text: string;
}

export interface SuggestionPayload {
  opted_out: boolean;
  class_id?: number;
  exemplar?: string;
  confidence: number;
}

export interface CatalogDocument {
  hash: string;
  classes: {
    id: number;
    name: string;
    exemplar: string;
    cluster_ids: number[];
    response_ids: number[];
  }[];
}

export class ApiClient {
  constructor(private readonly baseUrl: string = '') {}

  private url(path: string): string {
    return this.baseUrl + path;
  }

  async fetchNext(): Promise<NextPayload> {
    const reply = await fetch(this.url('/api/session/next'));
    if (!reply.ok) {
      throw new Error(`session/next failed with ${reply.status}`);
    }
    return (await reply.json()) as NextPayload;
  }

  async submitAction(cursor: number, action: ActionSpec): Promise<ActionOutcome> {
    const reply = await fetch(this.url('/api/session/action'), {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ cursor, action }),
    });
    const body = (await reply.json()) as { cursor?: number; error?: string };
    if (reply.ok) {
      return { ok: true, cursor: body.cursor ?? cursor + 1 };
    }
    return { ok: false, status: reply.status, error: body.error ?? `HTTP ${reply.status}` };
  }

  async exportCatalog(): Promise<CatalogDocument> {
    const reply = await fetch(this.url('/api/classes/export'));
    if (!reply.ok) {
      const body = (await reply.json()) as { error?: string };
      throw new Error(body.error ?? `export failed with ${reply.status}`);
    }
    return (await reply.json()) as CatalogDocument;
  }

  async suggest(turns: TurnInput[], threshold: number): Promise<SuggestionPayload> {
    const reply = await fetch(this.url('/api/suggest'), {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ turns, threshold }),
    });
    const body = (await reply.json()) as SuggestionPayload & { error?: string };
    if (!reply.ok) {
      throw new Error(body.error ?? `suggest failed with ${reply.status}`);
    }
    return body;
  }
}
