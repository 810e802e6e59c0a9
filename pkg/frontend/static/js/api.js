/**
 * Typed client for the merge service's JSON API. Every call maps 1:1 onto a
 * documented endpoint; the UI holds no state the server does not echo back.
 */
export class ApiClient {
    constructor(baseUrl = '') {
        this.baseUrl = baseUrl;
    }
    url(path) {
        return this.baseUrl + path;
    }
    async fetchNext() {
        const reply = await fetch(this.url('/api/session/next'));
        if (!reply.ok) {
            throw new Error(`session/next failed with ${reply.status}`);
        }
        return (await reply.json());
    }
    async submitAction(cursor, action) {
        const reply = await fetch(this.url('/api/session/action'), {
            method: 'POST',
            headers: { 'Content-Type': 'application/json' },
            body: JSON.stringify({ cursor, action }),
        });
        const body = (await reply.json());
        if (reply.ok) {
            return { ok: true, cursor: body.cursor ?? cursor + 1 };
        }
        return { ok: false, status: reply.status, error: body.error ?? `HTTP ${reply.status}` };
    }
    async exportCatalog() {
        const reply = await fetch(this.url('/api/classes/export'));
        if (!reply.ok) {
            const body = (await reply.json());
            throw new Error(body.error ?? `export failed with ${reply.status}`);
        }
        return (await reply.json());
    }
    async suggest(turns, threshold) {
        const reply = await fetch(this.url('/api/suggest'), {
            method: 'POST',
            headers: { 'Content-Type': 'application/json' },
            body: JSON.stringify({ turns, threshold }),
        });
        const body = (await reply.json());
        if (!reply.ok) {
            throw new Error(body.error ?? `suggest failed with ${reply.status}`);
        }
        return body;
    }
}
