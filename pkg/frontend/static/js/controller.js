/**
 * Session controller: the single mutable piece of the UI.
 *
 * State derives solely from server responses. An action is submitted with the
 * cursor token from the last fetched view; the server's verdict decides what
 * happens next. There are no optimistic updates: on success we refetch, on
 * 409 we refetch and drop the local intent, on 400 we surface the server's
 * message inline, and on a network failure we keep the action around behind
 * a retry affordance. At most one action is in flight at any moment.
 */
import { clampSelection, filterClasses, formatCentroidCard, FormatError } from './model.js';
import { renderBanner, renderCard, renderControls, renderCreateForm, renderPalette, } from './render.js';
export class SessionController {
    constructor(api) {
        this.api = api;
        this.state = {
            view: null,
            error: null,
            pendingRetry: null,
            busy: false,
            searchQuery: '',
            selectedIndex: 0,
            createName: '',
            createExemplar: '',
            membersExpanded: false,
        };
        this.listeners = [];
    }
    onChange(listener) {
        this.listeners.push(listener);
    }
    notify() {
        for (const listener of this.listeners) {
            listener();
        }
    }
    /** Pull the authoritative view; local input state is reset on advance. */
    async refresh() {
        this.state.view = await this.api.fetchNext();
        this.state.searchQuery = '';
        this.state.selectedIndex = 0;
        this.state.createName = '';
        this.state.createExemplar = '';
        this.state.membersExpanded = false;
        this.notify();
    }
    visibleClasses() {
        const classes = this.state.view?.classes ?? [];
        return filterClasses(classes, this.state.searchQuery);
    }
    setSearch(query) {
        this.state.searchQuery = query;
        this.state.selectedIndex = clampSelection(this.state.selectedIndex, this.visibleClasses().length);
        this.notify();
    }
    moveSelection(delta) {
        const length = this.visibleClasses().length;
        this.state.selectedIndex = clampSelection(this.state.selectedIndex + delta, length);
        this.notify();
    }
    setCreateFields(name, exemplar) {
        this.state.createName = name;
        this.state.createExemplar = exemplar;
        this.notify();
    }
    toggleMembers() {
        this.state.membersExpanded = !this.state.membersExpanded;
        this.notify();
    }
    /** Submit one action against the current cursor token. */
    async submit(action) {
        if (this.state.busy || this.state.view === null) {
            return false;
        }
        this.state.busy = true;
        this.state.error = null;
        this.state.pendingRetry = null;
        this.notify();
        try {
            const outcome = await this.api.submitAction(this.state.view.cursor, action);
            if (outcome.ok) {
                await this.refresh();
                return true;
            }
            if (outcome.status === 409) {
                // someone moved the session under us: resync, drop the local intent
                await this.refresh();
                this.state.error = 'Session moved on; showing the current cluster.';
                this.notify();
                return false;
            }
            this.state.error = outcome.error; // validation problem, e.g. duplicate name
            this.notify();
            return false;
        }
        catch {
            this.state.error = 'Network failure; the action was not applied.';
            this.state.pendingRetry = action;
            this.notify();
            return false;
        }
        finally {
            this.state.busy = false;
            this.notify();
        }
    }
    async retry() {
        const action = this.state.pendingRetry;
        if (!action) {
            return false;
        }
        return this.submit(action);
    }
    async assignSelected() {
        const visible = this.visibleClasses();
        const target = visible[this.state.selectedIndex];
        if (!target) {
            return false;
        }
        return this.submit({ kind: 'assign', class_id: target.id });
    }
    async createClass() {
        const name = this.state.createName.trim();
        if (!name) {
            this.state.error = 'A new class needs a name.';
            this.notify();
            return false;
        }
        const exemplar = this.state.createExemplar.trim();
        return this.submit({ kind: 'create', name, ...(exemplar ? { exemplar } : {}) });
    }
    async skip() {
        return this.submit({ kind: 'skip' });
    }
    async undo() {
        return this.submit({ kind: 'undo' });
    }
    /** Entire page as a string; main.ts assigns this to the mount's innerHTML. */
    renderHtml() {
        const { view, error, pendingRetry, busy } = this.state;
        if (view === null) {
            return '<div class="banner">loading session…</div>';
        }
        let card;
        try {
            card = formatCentroidCard(view);
        }
        catch (problem) {
            if (problem instanceof FormatError) {
                return renderBanner(problem.message, false);
            }
            throw problem;
        }
        const pieces = [renderBanner(error, pendingRetry !== null), renderCard(card, this.state.membersExpanded)];
        if (!card.complete) {
            pieces.push(renderPalette(view.classes, this.visibleClasses(), this.state.selectedIndex, this.state.searchQuery), renderCreateForm(this.state.createName, this.state.createExemplar), renderControls(busy));
        }
        return pieces.join('');
    }
}
