/**
 * DOM bootstrap: mounts the controller, re-renders on every state change, and
 * wires the keyboard bindings that make a 3,000-cluster session bearable:
 *
 *   /        focus the class palette search
 *   Enter    assign the highlighted class (from the search box)
 *   up/down  move the palette highlight
 *   c        focus the create-class form
 *   Ctrl+Enter  create (from the form fields)
 *   s        skip the cluster
 *   u        undo the last action
 *   e        expand/collapse member variants
 */
import { ApiClient } from './api.js';
import { SessionController } from './controller.js';
const api = new ApiClient('');
const controller = new SessionController(api);
const mount = document.getElementById('app');
function focusById(id) {
    const el = document.getElementById(id);
    el?.focus();
}
function inputValue(id) {
    return document.getElementById(id)?.value ?? '';
}
function syncFormState() {
    controller.state.searchQuery = inputValue('palette-search');
    controller.state.createName = inputValue('create-name');
    controller.state.createExemplar = inputValue('create-exemplar');
}
function render() {
    const active = document.activeElement?.id;
    const caret = document.activeElement?.selectionStart ?? null;
    mount.innerHTML = controller.renderHtml();
    if (active) {
        const el = document.getElementById(active);
        el?.focus();
        if (el && caret !== null && el.setSelectionRange) {
            el.setSelectionRange(caret, caret);
        }
    }
}
controller.onChange(render);
mount.addEventListener('click', (event) => {
    const target = event.target;
    const row = target.closest('li[data-class-id]');
    if (row) {
        void controller.submit({ kind: 'assign', class_id: Number(row.dataset.classId) });
        return;
    }
    switch (target.id) {
        case 'action-skip':
            void controller.skip();
            break;
        case 'action-undo':
            void controller.undo();
            break;
        case 'action-retry':
            void controller.retry();
            break;
        case 'create-submit':
            syncFormState();
            void controller.createClass();
            break;
    }
});
mount.addEventListener('input', (event) => {
    const target = event.target;
    if (target.id === 'palette-search') {
        controller.setSearch(target.value);
    }
});
document.addEventListener('keydown', (event) => {
    const inField = event.target.tagName === 'INPUT';
    if (event.key === 'Enter' && event.target.id === 'palette-search') {
        event.preventDefault();
        void controller.assignSelected();
        return;
    }
    if (event.key === 'Enter' && event.ctrlKey && inField) {
        event.preventDefault();
        syncFormState();
        void controller.createClass();
        return;
    }
    if (inField) {
        if (event.key === 'ArrowDown' || event.key === 'ArrowUp') {
            event.preventDefault();
            controller.moveSelection(event.key === 'ArrowDown' ? 1 : -1);
        }
        if (event.key === 'Escape') {
            event.target.blur();
        }
        return;
    }
    switch (event.key) {
        case '/':
            event.preventDefault();
            focusById('palette-search');
            break;
        case 'c':
            event.preventDefault();
            focusById('create-name');
            break;
        case 's':
            void controller.skip();
            break;
        case 'u':
            void controller.undo();
            break;
        case 'e':
            controller.toggleMembers();
            break;
    }
});
void controller.refresh().catch(() => {
    mount.innerHTML = '<div class="banner error">Cannot reach the merge service.</div>';
});
